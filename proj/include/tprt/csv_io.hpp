#ifndef TPRT_CSV_IO_HPP_
#define TPRT_CSV_IO_HPP_
//! \file csv_io.hpp
//  \brief Field CSV formats and atomic file writes.
//
//  ScalarField: header "x,y,value", rows ordered y-outer then x.
//  PhaseField:  header "x,y,theta,value", ordered y, then x, then ordinate.
//  Values are written in full-precision scientific notation, so a write/read
//  round trip reproduces every double bit-exactly.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tprt/fields.hpp"
#include "tprt/geometry.hpp"

namespace tprt {

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17e", v);
  return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (const char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double(const std::string& s, const std::string& context) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("CSV parse error (" + context + "): bad number '" + s + "'");
  }
}

}  // namespace detail

// Writes content to path via a temporary file and rename, so readers never
// observe a partially written artifact.
inline void atomic_write_text(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + tmp.string());
    out << content;
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string scalar_to_csv(const ScalarField& f) {
  std::string out = "x,y,value\n";
  const SpatialGrid& g = f.grid();
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      const Vec2 c = g.center(i, j);
      out += detail::format_double(c.x);
      out += ',';
      out += detail::format_double(c.y);
      out += ',';
      out += detail::format_double(f(i, j));
      out += '\n';
    }
  return out;
}

inline void write_scalar_csv(const std::filesystem::path& path, const ScalarField& f) {
  atomic_write_text(path, scalar_to_csv(f));
}

inline std::string phase_to_csv(const PhaseField& u) {
  std::string out = "x,y,theta,value\n";
  const SpatialGrid& g = u.grid();
  const AngularGrid& a = u.angles();
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i)
      for (int k = 0; k < a.size(); ++k) {
        const Vec2 c = g.center(i, j);
        out += detail::format_double(c.x);
        out += ',';
        out += detail::format_double(c.y);
        out += ',';
        out += detail::format_double(a.theta(k));
        out += ',';
        out += detail::format_double(u(i, j, k));
        out += '\n';
      }
  return out;
}

inline void write_phase_csv(const std::filesystem::path& path, const PhaseField& u) {
  atomic_write_text(path, phase_to_csv(u));
}

// Reads a ScalarField CSV, inferring the grid from the sample coordinates.
inline ScalarField read_scalar_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  std::string line;
  if (!std::getline(in, line) || detail::split_csv_line(line) !=
                                     std::vector<std::string>{"x", "y", "value"})
    throw std::runtime_error("CSV parse error (" + path.string() + "): expected header x,y,value");

  std::vector<double> xs, ys, vals;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cols = detail::split_csv_line(line);
    if (cols.size() != 3)
      throw std::runtime_error("CSV parse error (" + path.string() + "): expected 3 columns");
    xs.push_back(detail::parse_double(cols[0], path.string()));
    ys.push_back(detail::parse_double(cols[1], path.string()));
    vals.push_back(detail::parse_double(cols[2], path.string()));
  }
  if (vals.size() < 4) throw std::runtime_error("CSV parse error: too few rows");

  std::size_t nx = 1;
  while (nx < ys.size() && ys[nx] == ys[0]) ++nx;
  if (nx < 2 || vals.size() % nx != 0)
    throw std::runtime_error("CSV parse error (" + path.string() + "): inconsistent row blocks");
  const std::size_t ny = vals.size() / nx;
  if (ny < 2) throw std::runtime_error("CSV parse error: need at least 2 rows in y");

  const double dx = xs[1] - xs[0];
  const double dy = ys[nx] - ys[0];
  if (!(dx > 0.0) || !(dy > 0.0))
    throw std::runtime_error("CSV parse error (" + path.string() + "): non-increasing coordinates");
  SpatialGrid grid(dx * static_cast<double>(nx), dy * static_cast<double>(ny),
                   static_cast<int>(nx), static_cast<int>(ny));
  ScalarField f(grid);
  for (std::size_t r = 0; r < vals.size(); ++r) {
    const int i = static_cast<int>(r % nx);
    const int j = static_cast<int>(r / nx);
    const Vec2 expect = grid.center(i, j);
    if (std::abs(xs[r] - expect.x) > 1e-9 * grid.Lx() ||
        std::abs(ys[r] - expect.y) > 1e-9 * grid.Ly())
      throw std::runtime_error("CSV parse error (" + path.string() + "): non-uniform grid");
    f(i, j) = vals[r];
  }
  return f;
}

// Reads a PhaseField CSV (grid and ordinates inferred).
inline PhaseField read_phase_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  std::string line;
  if (!std::getline(in, line) ||
      detail::split_csv_line(line) != std::vector<std::string>{"x", "y", "theta", "value"})
    throw std::runtime_error("CSV parse error (" + path.string() +
                             "): expected header x,y,theta,value");

  std::vector<double> xs, ys, vals;
  std::vector<double> thetas;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cols = detail::split_csv_line(line);
    if (cols.size() != 4)
      throw std::runtime_error("CSV parse error (" + path.string() + "): expected 4 columns");
    xs.push_back(detail::parse_double(cols[0], path.string()));
    ys.push_back(detail::parse_double(cols[1], path.string()));
    thetas.push_back(detail::parse_double(cols[2], path.string()));
    vals.push_back(detail::parse_double(cols[3], path.string()));
  }
  std::size_t n_v = 1;
  while (n_v < xs.size() && xs[n_v] == xs[0] && ys[n_v] == ys[0]) ++n_v;
  if (n_v < 1 || vals.size() % n_v != 0)
    throw std::runtime_error("CSV parse error (" + path.string() + "): inconsistent ordinates");
  const std::size_t cells = vals.size() / n_v;

  std::size_t nx = 1;
  while (nx < cells && ys[nx * n_v] == ys[0]) ++nx;
  if (nx < 2 || cells % nx != 0)
    throw std::runtime_error("CSV parse error (" + path.string() + "): inconsistent row blocks");
  const std::size_t ny = cells / nx;

  const double dx = xs[n_v] - xs[0];
  const double dy = ys[nx * n_v] - ys[0];
  SpatialGrid grid(dx * static_cast<double>(nx), dy * static_cast<double>(ny),
                   static_cast<int>(nx), static_cast<int>(ny));
  AngularGrid angles(static_cast<int>(n_v));
  PhaseField u(grid, angles);
  for (std::size_t r = 0; r < vals.size(); ++r) {
    const std::size_t cell = r / n_v;
    const int k = static_cast<int>(r % n_v);
    const int i = static_cast<int>(cell % nx);
    const int j = static_cast<int>(cell / nx);
    u(i, j, k) = vals[r];
  }
  return u;
}

}  // namespace tprt

#endif  // TPRT_CSV_IO_HPP_
