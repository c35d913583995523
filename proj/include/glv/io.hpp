#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "glv/continuation.hpp"

namespace glv::io {

/// Seventeen significant digits, locale independent; round-trips every double.
inline std::string fmt(double v) {
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, r.ptr);
}

/// Writes next to the target and renames, so readers never see a partial file.
inline void write_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out << text;
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// CSV field, quoted when it holds a separator or a quote (labels such as "<rho2,sigma>").
inline std::string quote(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

/// Splits one CSV line; honours quoted fields and doubled quotes.
inline std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char c = line[k];
    if (quoted) {
      if (c != '"') {
        cur += c;
      } else if (k + 1 < line.size() && line[k + 1] == '"') {
        cur += '"';
        ++k;
      } else {
        quoted = false;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double(const std::string& s) {
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument("not a number: '" + s + "'");
  return v;
}

// ---- branches ----

inline constexpr const char* kBranchHeader = "arclength,mu,energy,eta,norm_psi,n_unstable,isotropy_label,total_vorticity";

struct BranchRow {
  double arclength = 0.0;
  double mu = 0.0;
  double energy = 0.0;
  double eta = 0.0;
  double norm_psi = 0.0;
  int n_unstable = 0;
  std::string isotropy_label;
  std::optional<int> total_vorticity;  // empty when no admissible boundary loop exists
};

inline BranchRow row_of(const BranchPoint& p) {
  return {p.arclength, p.state.mu, p.energy, p.state.eta, norm(p.state.psi), p.stability.n_unstable,
          std::string(to_string(p.isotropy.label)), p.total_vorticity};
}

inline std::string branch_csv(const Branch& br) {
  std::string out = std::string(kBranchHeader) + "\n";
  for (const auto& p : br.points) {
    const BranchRow r = row_of(p);
    out += fmt(r.arclength) + "," + fmt(r.mu) + "," + fmt(r.energy) + "," + fmt(r.eta) + "," + fmt(r.norm_psi) + "," +
           std::to_string(r.n_unstable) + "," + quote(r.isotropy_label) + "," +
           (r.total_vorticity ? std::to_string(*r.total_vorticity) : std::string()) + "\n";
  }
  return out;
}

inline void write_branch(const Branch& br, const std::filesystem::path& path) { write_atomic(path, branch_csv(br)); }

inline std::vector<BranchRow> read_branch(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line) || split(line) != split(kBranchHeader)) {
    throw std::runtime_error(path.string() + ": not a branch file");
  }
  std::vector<BranchRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != 8) throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
    BranchRow r;
    r.arclength = parse_double(f[0]);
    r.mu = parse_double(f[1]);
    r.energy = parse_double(f[2]);
    r.eta = parse_double(f[3]);
    r.norm_psi = parse_double(f[4]);
    r.n_unstable = std::stoi(f[5]);
    r.isotropy_label = f[6];
    if (!f[7].empty()) r.total_vorticity = std::stoi(f[7]);
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---- bifurcation table ----

inline constexpr const char* kBifurcationHeader =
    "branch,id,mu,type,multiplicity,critical_value,isotropy_label,arclength,segment,index_change,state_file";

struct BifurcationRow {
  std::string branch;
  int id = 0;
  double mu = 0.0;
  std::string type;
  int multiplicity = 0;
  double critical_value = 0.0;
  std::string isotropy_label;
  double arclength = 0.0;
  std::size_t segment = 0;
  bool index_change = true;
  std::string state_file;  // relative to the table, empty when not stored
};

inline std::string bifurcation_state_name(const BifurcationPoint& b) {
  return "bif_" + b.branch + "_" + std::to_string(b.id) + ".csv";
}

inline std::string bifurcation_csv(const std::vector<BifurcationPoint>& bifs, bool with_states) {
  std::string out = std::string(kBifurcationHeader) + "\n";
  for (const auto& b : bifs) {
    out += quote(b.branch) + "," + std::to_string(b.id) + "," + fmt(b.mu) + "," + to_string(b.type) + "," +
           std::to_string(b.multiplicity) + "," + fmt(b.critical_value) + "," +
           quote(std::string(to_string(b.isotropy.label))) + "," + fmt(b.arclength) + "," + std::to_string(b.segment) + "," +
           (b.index_change ? "1" : "0") + "," + (with_states ? bifurcation_state_name(b) : std::string()) + "\n";
  }
  return out;
}

inline std::vector<BifurcationRow> read_bifurcations(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line) || split(line) != split(kBifurcationHeader)) {
    throw std::runtime_error(path.string() + ": not a bifurcation table");
  }
  std::vector<BifurcationRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != 11) throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
    BifurcationRow r;
    r.branch = f[0];
    r.id = std::stoi(f[1]);
    r.mu = parse_double(f[2]);
    r.type = f[3];
    r.multiplicity = std::stoi(f[4]);
    r.critical_value = parse_double(f[5]);
    r.isotropy_label = f[6];
    r.arclength = parse_double(f[7]);
    r.segment = static_cast<std::size_t>(std::stoull(f[8]));
    r.index_change = f[9] == "1";
    r.state_file = f[10];
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---- fields ----

inline constexpr const char* kFieldHeader = "i,j,x,y,re,im";

inline std::string field_csv(const OrderField& psi) {
  const Grid& g = psi.grid();
  std::string out = "# d=" + fmt(g.d()) + " N=" + std::to_string(g.n()) + "\n" + kFieldHeader + "\n";
  for (int j = -g.half(); j <= g.half(); ++j) {
    for (int i = -g.half(); i <= g.half(); ++i) {
      const Complex v = psi(i, j);
      out += std::to_string(i) + "," + std::to_string(j) + "," + fmt(g.x(i)) + "," + fmt(g.y(j)) + "," + fmt(v.real()) +
             "," + fmt(v.imag()) + "\n";
    }
  }
  return out;
}

inline void write_field(const OrderField& psi, const std::filesystem::path& path) { write_atomic(path, field_csv(psi)); }

/// Reads a field written by write_field; the grid comes from the comment line.
inline OrderField read_field(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  std::getline(in, line);
  double d = 0.0;
  int n = 0;
  if (std::sscanf(line.c_str(), "# d=%lf N=%d", &d, &n) != 2) throw std::runtime_error(path.string() + ": missing grid line");
  OrderField psi{Grid(d, n)};
  std::getline(in, line);
  if (split(line) != split(kFieldHeader)) throw std::runtime_error(path.string() + ": not a field file");
  std::size_t count = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != 6) throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
    const int i = std::stoi(f[0]), j = std::stoi(f[1]);
    if (!psi.grid().contains(i, j)) throw std::runtime_error(path.string() + ": node outside grid");
    psi(i, j) = Complex(parse_double(f[4]), parse_double(f[5]));
    ++count;
  }
  if (count != psi.size()) throw std::runtime_error(path.string() + ": incomplete field");
  return psi;
}

// plain 8-bit graymap, rows from y_max down to y_min
template <class F>
std::string pgm(const Grid& g, F&& gray) {
  const int m = g.nodes_per_edge();
  std::string out = "P2\n" + std::to_string(m) + " " + std::to_string(m) + "\n255\n";
  for (int j = g.half(); j >= -g.half(); --j) {
    for (int i = -g.half(); i <= g.half(); ++i) {
      const double v = std::clamp(gray(i, j), 0.0, 1.0);
      out += std::to_string(static_cast<int>(std::lround(255.0 * v)));
      out += i == g.half() ? '\n' : ' ';
    }
  }
  return out;
}

/// prefix_density.pgm (|psi|^2, black 0 to white 1), prefix_phase.pgm (arg psi over
/// [-pi, pi]) and prefix.csv with the complex values.
inline std::vector<std::filesystem::path> write_pattern(const OrderField& psi, const std::filesystem::path& prefix) {
  const Grid& g = psi.grid();
  auto with = [&](const char* suffix) {
    auto p = prefix;
    p += suffix;
    return p;
  };
  const auto dens = with("_density.pgm"), phase = with("_phase.pgm"), raw = with(".csv");
  write_atomic(dens, pgm(g, [&](int i, int j) { return std::norm(psi(i, j)); }));
  write_atomic(phase, pgm(g, [&](int i, int j) {
                 return (std::arg(psi(i, j)) + std::numbers::pi) / (2.0 * std::numbers::pi);
               }));
  write_field(psi, raw);
  return {dens, phase, raw};
}

/// Gray values of a P2 file, top row first.
inline std::vector<std::vector<int>> read_pgm(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P2" || w <= 0 || h <= 0) throw std::runtime_error(path.string() + ": not a P2 graymap");
  std::vector<std::vector<int>> rows(h, std::vector<int>(w));
  for (auto& r : rows) {
    for (auto& v : r) {
      if (!(in >> v)) throw std::runtime_error(path.string() + ": truncated graymap");
    }
  }
  return rows;
}

}  // namespace glv::io
