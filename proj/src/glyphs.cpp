#include <sstream>
#include <string>
#include <vector>

#include "glyphs_data.hpp"
#include "stclust/core.hpp"

namespace stclust::detail {

namespace {

std::vector<std::vector<std::string>> parse_glyphs() {
    std::vector<std::vector<std::string>> glyphs;
    std::istringstream in{std::string(kGlyphText)};
    std::string line;
    std::vector<std::string>* current = nullptr;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (line.rfind("digit", 0) == 0) {
            glyphs.emplace_back();
            current = &glyphs.back();
            continue;
        }
        if (current == nullptr) throw Error("glyph data: row before header");
        current->push_back(line);
    }
    for (const auto& g : glyphs)
        for (const auto& row : g)
            if (g.size() != row.size()) throw Error("glyph data: templates must be square");
    return glyphs;
}

}  // namespace

const std::vector<std::vector<std::string>>& digit_glyphs() {
    static const auto glyphs = parse_glyphs();
    return glyphs;
}

}  // namespace stclust::detail
