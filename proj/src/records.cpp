#include "gtee/records.hpp"

#include <sstream>

namespace gtee {

std::string join_tokens(const std::vector<std::string>& tokens, std::size_t begin, std::size_t end) {
    std::string out;
    for (std::size_t i = begin; i < end && i < tokens.size(); ++i) {
        if (i > begin) out += ' ';
        out += tokens[i];
    }
    return out;
}

std::vector<std::string> split_whitespace(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream is(text);
    std::string w;
    while (is >> w) out.push_back(std::move(w));
    return out;
}

}  // namespace gtee
