#pragma once

#include "switchsynth/mtl.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace switchsynth {

/// Names visible to formula atoms. Outputs are linear maps y = C x + D u.
struct SymbolTable {
  struct Output {
    std::string name;
    Vector c_row;
    Vector d_row;
  };
  std::vector<std::string> states;
  std::vector<std::string> inputs;
  std::vector<Output> outputs;
};

/**
 * Parses the formula text format.
 *
 *   formula := disj
 *   disj    := conj ('|' conj)*
 *   conj    := until ('&' until)*
 *   until   := unary ('until' '[' num ',' num ']' unary)?
 *   unary   := '!' unary | ('always'|'G') itv unary | ('ev'|'eventually'|'F') itv unary
 *            | '(' formula ')' | 'true' | atom
 *   atom    := lin ('<'|'<='|'>'|'>=') lin
 *   lin     := ['+'|'-'] term (('+'|'-') term)*
 *   term    := num ['*' name] | name
 *
 * '#' starts a comment. Output names are expanded through their C and D rows,
 * then each atom is normalized to a unit state normal with the factor folded
 * into b. Throws ParseError with a line:column location.
 */
FormulaPtr parse_formula(std::string_view text, const SymbolTable& symbols);

}  // namespace switchsynth
