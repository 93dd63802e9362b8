#include <algorithm>
#include <fmt/core.h>
#include <mcf/core/error.h>
#include <mcf/elements.h>

namespace mcf {

const std::vector<Element> &element_table() {
  static const std::vector<Element> table = {
      {"H", 1, 1.008, 0.31},    {"He", 2, 4.0026, 0.28},
      {"Li", 3, 6.94, 1.28},    {"B", 5, 10.81, 0.84},
      {"C", 6, 12.011, 0.76},   {"N", 7, 14.007, 0.71},
      {"O", 8, 15.999, 0.66},   {"F", 9, 18.998, 0.57},
      {"Ne", 10, 20.180, 0.58}, {"Na", 11, 22.990, 1.66},
      {"Mg", 12, 24.305, 1.41}, {"Al", 13, 26.982, 1.21},
      {"Si", 14, 28.085, 1.11}, {"P", 15, 30.974, 1.07},
      {"S", 16, 32.06, 1.05},   {"Cl", 17, 35.45, 1.02},
      {"Ar", 18, 39.948, 1.06}, {"K", 19, 39.098, 2.03},
      {"Ca", 20, 40.078, 1.76}, {"Se", 34, 78.971, 1.20},
      {"Br", 35, 79.904, 1.20}, {"Kr", 36, 83.798, 1.16},
      {"I", 53, 126.904, 1.39}, {"Xe", 54, 131.293, 1.40},
  };
  return table;
}

bool is_known_element(std::string_view symbol) {
  const auto &t = element_table();
  return std::any_of(t.begin(), t.end(),
                     [&](const Element &e) { return e.symbol == symbol; });
}

const Element &element(std::string_view symbol) {
  for (const auto &e : element_table())
    if (e.symbol == symbol)
      return e;
  throw Error(ErrorKind::UnknownElement,
              fmt::format("unknown element '{}'", symbol));
}

std::vector<double> atomic_masses(const std::vector<std::string> &species) {
  std::vector<double> m;
  m.reserve(species.size());
  for (const auto &s : species)
    m.push_back(element(s).mass);
  return m;
}

} // namespace mcf
