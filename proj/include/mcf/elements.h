#pragma once
#include <string>
#include <string_view>
#include <vector>

namespace mcf {

struct Element {
  std::string_view symbol;
  int atomic_number;
  double mass;            // standard atomic weight, amu
  double covalent_radius; // Angstrom (Cordero et al. 2008)
};

/// Throws ErrorKind::UnknownElement for symbols outside the built-in table.
const Element &element(std::string_view symbol);
bool is_known_element(std::string_view symbol);
const std::vector<Element> &element_table();

inline bool is_hydrogen(std::string_view symbol) { return symbol == "H"; }

std::vector<double> atomic_masses(const std::vector<std::string> &species);

} // namespace mcf
