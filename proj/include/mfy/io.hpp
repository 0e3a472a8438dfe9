#pragma once

#include "mfy/averaging.hpp"
#include "mfy/flow.hpp"
#include "mfy/paths.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace mfy {

/// Shortest-round-trip-safe decimal form: 17 significant digits.
inline std::string
format_double(double v)
{
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Writes rows of numbers as CSV under a header.
class CsvWriter
{
public:
  CsvWriter(const std::filesystem::path& file, const std::vector<std::string>& header)
    : out_(file)
  {
    if (!out_)
      throw Error("cannot open '" + file.string() + "' for writing");
    row_strings(header);
  }

  void row(std::span<const double> values)
  {
    std::vector<std::string> cells;
    cells.reserve(values.size());
    for (double v : values)
      cells.push_back(format_double(v));
    row_strings(cells);
  }

  void row_strings(const std::vector<std::string>& cells)
  {
    for (std::size_t i = 0; i < cells.size(); ++i)
      out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
  }

private:
  std::ofstream out_;
};

/// CSV with columns t, x_1..x_d.
inline void
write_path_csv(const std::filesystem::path& file, const SamplePath& path)
{
  std::vector<std::string> header{ "t" };
  for (std::size_t c = 0; c < path.dim(); ++c)
    header.push_back("x_" + std::to_string(c + 1));
  CsvWriter csv(file, header);
  std::vector<double> row(path.dim() + 1);
  for (std::size_t k = 0; k < path.size(); ++k) {
    row[0] = path.grid().time(k);
    std::copy_n(path.at(k).begin(), path.dim(), row.begin() + 1);
    csv.row(row);
  }
}

inline SamplePath
read_path_csv(const std::filesystem::path& file)
{
  std::ifstream in(file);
  if (!in)
    throw Error("cannot open '" + file.string() + "'");
  std::string line;
  std::getline(in, line);
  const std::size_t dim = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  require(dim >= 1, "read_path_csv: expected columns t, x_1..x_d");
  std::vector<double> times, values;
  while (std::getline(in, line)) {
    if (line.empty())
      continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ss, cell, ',')) {
      const double v = std::stod(cell);
      if (col++ == 0)
        times.push_back(v);
      else
        values.push_back(v);
    }
    require(col == dim + 1, "read_path_csv: ragged row");
  }
  require(times.size() >= 2, "read_path_csv: need at least two rows");
  const TimeGrid grid(times.back(), times.size() - 1);
  return SamplePath(grid, dim, std::move(values));
}

/// Binary layout, little-endian. Every file starts with a 4-byte magic, a
/// u32 version and the common header
///   u64 d, u64 n_steps, f64 T, u32 noise kind, f64 hurst
/// followed by a kind-specific header and row-major f64 payload:
///   path   "MFYP": (n_steps+1) x d
///   flow   "MFYA": u64 atoms; (n_steps+1) x atoms x d
///   field  "MFYF": f64 L, u64 n_cells, u64 components; (n_steps+1) x nodes x components
/// A static field is stored with n_steps = 0.
namespace binary {

constexpr std::uint32_t kVersion = 1;

struct Header
{
  std::uint64_t dim = 1;
  std::uint64_t n_steps = 1;
  double horizon = 1.0;
  NoiseSpec noise{};
};

class Writer
{
public:
  explicit Writer(const std::filesystem::path& file)
    : out_(file, std::ios::binary)
  {
    if (!out_)
      throw Error("cannot open '" + file.string() + "' for writing");
  }
  template<class T>
  void put(T v)
  {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void put_magic(const char* m) { out_.write(m, 4); }
  void put_array(std::span<const double> v)
  {
    out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  void put_header(const char* magic, const Header& h)
  {
    put_magic(magic);
    put(kVersion);
    put(h.dim);
    put(h.n_steps);
    put(h.horizon);
    put(static_cast<std::uint32_t>(h.noise.kind));
    put(h.noise.hurst);
  }

private:
  std::ofstream out_;
};

class Reader
{
public:
  explicit Reader(const std::filesystem::path& file)
    : in_(file, std::ios::binary)
  {
    if (!in_)
      throw Error("cannot open '" + file.string() + "'");
  }
  template<class T>
  T get()
  {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in_)
      throw InvalidInput("binary file is truncated");
    return v;
  }
  std::vector<double> get_array(std::size_t n)
  {
    std::vector<double> v(n);
    in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in_)
      throw InvalidInput("binary file is truncated");
    return v;
  }
  Header get_header(const char* magic)
  {
    char m[4];
    in_.read(m, 4);
    if (!in_ || std::memcmp(m, magic, 4) != 0)
      throw InvalidInput(std::string("binary file does not start with ") + std::string(magic, 4));
    if (get<std::uint32_t>() != kVersion)
      throw InvalidInput("unsupported binary version");
    Header h;
    h.dim = get<std::uint64_t>();
    h.n_steps = get<std::uint64_t>();
    h.horizon = get<double>();
    const auto kind = get<std::uint32_t>();
    require(kind <= 2, "binary file has an unknown noise kind");
    h.noise.kind = static_cast<NoiseKind>(kind);
    h.noise.hurst = get<double>();
    return h;
  }

private:
  std::ifstream in_;
};

} // namespace binary

inline void
write_path_binary(const std::filesystem::path& file, const SamplePath& path, NoiseSpec noise = {})
{
  binary::Writer w(file);
  w.put_header("MFYP", { path.dim(), path.grid().n_steps(), path.grid().horizon(), noise });
  w.put_array(path.values());
}

inline SamplePath
read_path_binary(const std::filesystem::path& file, NoiseSpec* noise = nullptr)
{
  binary::Reader r(file);
  const auto h = r.get_header("MFYP");
  if (noise)
    *noise = h.noise;
  const TimeGrid grid(h.horizon, h.n_steps);
  return SamplePath(grid, h.dim, r.get_array(grid.size() * h.dim));
}

inline void
write_flow_binary(const std::filesystem::path& file, const EmpiricalMeasureFlow& flow, NoiseSpec noise = {})
{
  binary::Writer w(file);
  w.put_header("MFYA", { flow.dim(), flow.grid().n_steps(), flow.grid().horizon(), noise });
  w.put(static_cast<std::uint64_t>(flow.atoms()));
  w.put_array(flow.values());
}

inline EmpiricalMeasureFlow
read_flow_binary(const std::filesystem::path& file)
{
  binary::Reader r(file);
  const auto h = r.get_header("MFYA");
  const auto atoms = r.get<std::uint64_t>();
  EmpiricalMeasureFlow flow(TimeGrid(h.horizon, h.n_steps), atoms, h.dim);
  const auto v = r.get_array(flow.values().size());
  for (std::size_t k = 0; k < flow.grid().size(); ++k)
    std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(k * atoms * h.dim), atoms * h.dim,
                flow.marginal(k).begin());
  return flow;
}

inline void
write_field_binary(const std::filesystem::path& file, const GriddedField& field)
{
  binary::Writer w(file);
  const auto& g = field.grid();
  w.put_header("MFYF", { g.dim(), 0, 0.0, {} });
  w.put(g.half_width());
  w.put(static_cast<std::uint64_t>(g.n_cells()));
  w.put(static_cast<std::uint64_t>(field.components()));
  w.put_array(field.values());
}

inline GriddedField
read_field_binary(const std::filesystem::path& file)
{
  binary::Reader r(file);
  const auto h = r.get_header("MFYF");
  require(h.n_steps == 0, "read_field_binary: file holds a time-dependent field");
  const double l = r.get<double>();
  const auto n = r.get<std::uint64_t>();
  const auto comps = r.get<std::uint64_t>();
  GriddedField field(SpatialGrid(l, n, h.dim), comps);
  const auto v = r.get_array(field.values().size());
  std::copy(v.begin(), v.end(), field.values().begin());
  return field;
}

inline void
write_averaged_field_binary(const std::filesystem::path& file, const AveragedField& g, NoiseSpec noise = {})
{
  binary::Writer w(file);
  const auto& sg = g.spatial_grid();
  w.put_header("MFYF", { sg.dim(), g.time_grid().n_steps(), g.time_grid().horizon(), noise });
  w.put(sg.half_width());
  w.put(static_cast<std::uint64_t>(sg.n_cells()));
  w.put(static_cast<std::uint64_t>(g.components()));
  for (std::size_t k = 0; k < g.time_grid().size(); ++k)
    w.put_array(g.cumulative(k));
}

inline AveragedField
read_averaged_field_binary(const std::filesystem::path& file, bool with_gradient = false)
{
  binary::Reader r(file);
  const auto h = r.get_header("MFYF");
  require(h.n_steps >= 1, "read_averaged_field_binary: file holds a static field");
  const double l = r.get<double>();
  const auto n = r.get<std::uint64_t>();
  const auto comps = r.get<std::uint64_t>();
  AveragedField g(SpatialGrid(l, n, h.dim), TimeGrid(h.horizon, h.n_steps), comps);
  for (std::size_t k = 0; k < g.time_grid().size(); ++k) {
    const auto v = r.get_array(g.spatial_grid().size() * comps);
    for (std::size_t node = 0; node < g.spatial_grid().size(); ++node)
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(node * comps), comps,
                  g.cumulative_node(k, node).begin());
  }
  if (with_gradient)
    g.compute_gradient();
  return g;
}

} // namespace mfy
