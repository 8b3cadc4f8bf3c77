#include "plotcast/detok.hpp"

#include <cctype>
#include <string_view>

namespace plotcast {

namespace {

bool attaches_left(std::string_view t) {
  static constexpr std::string_view kLeft[] = {".",  ",",   ";",   ":",   "!",   "?",   "''", ")", "]",  "}", "%",
                                               "...", "n't", "'s",  "'re", "'ve", "'ll", "'d", "'m", "'"};
  for (auto s : kLeft)
    if (t == s) return true;
  return false;
}

bool attaches_right(std::string_view t) { return t == "``" || t == "(" || t == "[" || t == "{" || t == "$"; }

bool ends_sentence(std::string_view t) { return t == "." || t == "!" || t == "?" || t == "..."; }

}  // namespace

std::string detokenize_truecase(std::span<const std::string> tokens) {
  std::string out;
  bool capitalize = true;
  bool glue_next = false;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    std::string tok = tokens[i] == "``" || tokens[i] == "''" ? "\"" : tokens[i];
    if (tok == "i") tok = "I";
    if (capitalize && !tok.empty() && std::isalpha(static_cast<unsigned char>(tok[0]))) {
      tok[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(tok[0])));
      capitalize = false;
    } else if (capitalize && !tok.empty() && std::isdigit(static_cast<unsigned char>(tok[0]))) {
      capitalize = false;
    }
    if (!out.empty() && !glue_next && !attaches_left(tokens[i])) out.push_back(' ');
    out += tok;
    glue_next = attaches_right(tokens[i]);
    if (ends_sentence(tokens[i])) capitalize = true;
  }
  return out;
}

}  // namespace plotcast
