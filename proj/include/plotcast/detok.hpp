#pragma once

#include <span>
#include <string>

namespace plotcast {

/// Treebank-style joining plus rule-based truecasing: the first letter and
/// the first word after . ! ? are capitalized, as is a standalone "i".
std::string detokenize_truecase(std::span<const std::string> tokens);

}  // namespace plotcast
