#include <fmt/core.h>
#include <fstream>
#include <mcf/core/error.h>
#include <mcf/io/xyz.h>
#include <regex>
#include <sstream>

namespace mcf::io {

namespace {
std::string key_value(const std::string &comment, const std::string &key) {
  const std::regex quoted(key + R"(\s*=\s*\"([^\"]*)\")");
  const std::regex bare(key + R"(\s*=\s*([^\s\"]+))");
  std::smatch m;
  if (std::regex_search(comment, m, quoted))
    return m[1];
  if (std::regex_search(comment, m, bare))
    return m[1];
  return "";
}

std::vector<crystal::AtomicStructure> parse_frames(const std::string &text,
                                                   const std::string &name,
                                                   bool need_lattice) {
  std::istringstream in(text);
  std::vector<crystal::AtomicStructure> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    lineno++;
    if (line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    std::size_t n = 0;
    try {
      n = std::stoul(line);
    } catch (const std::exception &) {
      throw Error(ErrorKind::Schema, fmt::format("{} line {}: expected atom count", name, lineno));
    }
    std::string comment;
    if (!std::getline(in, comment))
      throw Error(ErrorKind::Schema, fmt::format("{} line {}: missing comment line", name, lineno + 1));
    lineno++;
    crystal::AtomicStructure s;
    s.id = key_value(comment, "id");
    if (s.id.empty())
      s.id = fmt::format("{}-{}", name, out.size());
    const std::string lat = key_value(comment, "Lattice");
    if (lat.empty() && !need_lattice) {
      s.lattice = Lattice::Identity();
    } else if (lat.empty()) {
      throw Error(ErrorKind::Schema, fmt::format("{} line {}: missing Lattice", name, lineno));
    } else {
      std::istringstream ls(lat);
      for (int r = 0; r < 3; r++)
        for (int c = 0; c < 3; c++)
          if (!(ls >> s.lattice(r, c)))
            throw Error(ErrorKind::Schema,
                        fmt::format("{} line {}: Lattice needs 9 numbers", name, lineno));
    }
    s.cart.resize(static_cast<Eigen::Index>(n), 3);
    for (std::size_t i = 0; i < n; i++) {
      if (!std::getline(in, line))
        throw Error(ErrorKind::Schema, fmt::format("{}: truncated frame", name));
      lineno++;
      std::istringstream as(line);
      std::string sym;
      double x, y, z;
      if (!(as >> sym >> x >> y >> z))
        throw Error(ErrorKind::Schema, fmt::format("{} line {}: bad atom line", name, lineno));
      s.species.push_back(sym);
      s.cart.row(static_cast<Eigen::Index>(i)) << x, y, z;
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::string slurp(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorKind::Io, "cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}
} // namespace

std::vector<crystal::AtomicStructure> parse_extxyz(const std::string &text,
                                                   const std::string &name) {
  return parse_frames(text, name, true);
}

std::vector<crystal::AtomicStructure> read_extxyz(const std::string &path) {
  return parse_extxyz(slurp(path), path);
}

Molecule read_xyz_molecule(const std::string &path) {
  const auto frames = parse_frames(slurp(path), path, false);
  if (frames.empty() || frames.front().size() == 0)
    throw Error(ErrorKind::Schema, path + ": no atoms");
  return {frames.front().id, frames.front().species, frames.front().cart};
}

std::string format_extxyz(const crystal::AtomicStructure &s) {
  std::string out = fmt::format("{}\n", s.size());
  out += "Lattice=\"";
  for (int r = 0; r < 3; r++)
    for (int c = 0; c < 3; c++)
      out += fmt::format("{}{:.10f}", (r || c) ? " " : "", s.lattice(r, c));
  out += fmt::format("\" Properties=species:S:1:pos:R:3 id={}\n", s.id);
  for (std::size_t i = 0; i < s.size(); i++)
    out += fmt::format("{} {:.10f} {:.10f} {:.10f}\n", s.species[i],
                       s.cart(static_cast<Eigen::Index>(i), 0),
                       s.cart(static_cast<Eigen::Index>(i), 1),
                       s.cart(static_cast<Eigen::Index>(i), 2));
  return out;
}

} // namespace mcf::io
