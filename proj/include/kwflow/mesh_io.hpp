#pragma once

#include <Eigen/Dense>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "kwflow/errors.hpp"
#include "kwflow/mesh.hpp"

namespace kwflow {

// All floating-point output is written with 17 significant digits so that
// reading a file back reproduces the doubles bit for bit.
inline std::string format_real(double x) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.17g", x);
  return buffer;
}

namespace detail {

struct NumberedLine {
  int number;  // 1-based line in the file
  std::string text;
};

inline std::vector<std::string_view> split_tokens(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r' ||
                               line[i] == ','))
      ++i;
    std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r' &&
           line[i] != ',')
      ++i;
    if (i > start) tokens.push_back(line.substr(start, i - start));
  }
  return tokens;
}

inline double parse_real(std::string_view token, int line_number) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc{} || ptr != token.data() + token.size() || !std::isfinite(value))
    throw IoError("line " + std::to_string(line_number) + ": bad real '" +
                  std::string(token) + "'");
  return value;
}

inline int parse_index(std::string_view token, int line_number) {
  int value = 0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc{} || ptr != token.data() + token.size())
    throw IoError("line " + std::to_string(line_number) + ": bad integer '" +
                  std::string(token) + "'");
  return value;
}

// Lines after the first, with '#' comments stripped and blanks dropped.
inline std::vector<NumberedLine> effective_lines(std::istream& in, int first_number) {
  std::vector<NumberedLine> lines;
  std::string raw;
  int number = first_number;
  while (std::getline(in, raw)) {
    ++number;
    const std::size_t hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    if (split_tokens(raw).empty()) continue;
    lines.push_back({number, raw});
  }
  return lines;
}

}  // namespace detail

inline ConicalMesh read_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open mesh file '" + path + "'");

  std::string header;
  if (!std::getline(in, header)) throw IoError("'" + path + "': empty file");
  {
    const auto tokens = detail::split_tokens(header);
    if (tokens.size() != 2 || tokens[0] != "conical-mesh" || tokens[1] != "1")
      throw IoError("'" + path + "': first line must be 'conical-mesh 1'");
  }

  const auto lines = detail::effective_lines(in, 1);
  std::size_t at = 0;
  auto next_line = [&](const char* what) -> const detail::NumberedLine& {
    if (at >= lines.size())
      throw IoError("'" + path + "': unexpected end of file, expected " + what);
    return lines[at++];
  };

  const auto& counts_line = next_line("counts 'V F C'");
  const auto counts = detail::split_tokens(counts_line.text);
  if (counts.size() != 3)
    throw IoError("line " + std::to_string(counts_line.number) + ": expected 'V F C' counts");
  const int vertex_count = detail::parse_index(counts[0], counts_line.number);
  const int face_count = detail::parse_index(counts[1], counts_line.number);
  const int cone_count = detail::parse_index(counts[2], counts_line.number);
  if (vertex_count < 3 || face_count < 2 || cone_count < 0)
    throw IoError("line " + std::to_string(counts_line.number) + ": implausible counts");

  ConicalMesh mesh;
  mesh.vertex_count = vertex_count;

  bool abstract_mode = false;
  for (int v = 0; v < vertex_count; ++v) {
    const auto& line = next_line("a vertex record");
    const auto tokens = detail::split_tokens(line.text);
    const bool is_abstract = tokens.size() == 1 && tokens[0] == "abstract";
    if (v == 0) {
      abstract_mode = is_abstract;
      if (!abstract_mode) mesh.positions.reserve(vertex_count);
    }
    if (is_abstract != abstract_mode)
      throw IoError("line " + std::to_string(line.number) +
                    ": vertex records must be uniformly coordinates or 'abstract'");
    if (!is_abstract) {
      if (tokens.size() != 3)
        throw IoError("line " + std::to_string(line.number) + ": expected 3 coordinates");
      mesh.positions.push_back({detail::parse_real(tokens[0], line.number),
                                detail::parse_real(tokens[1], line.number),
                                detail::parse_real(tokens[2], line.number)});
    }
  }

  mesh.faces.reserve(face_count);
  for (int f = 0; f < face_count; ++f) {
    const auto& line = next_line("a face record");
    const auto tokens = detail::split_tokens(line.text);
    if (tokens.size() != 3)
      throw IoError("line " + std::to_string(line.number) + ": expected 3 vertex indices");
    std::array<int, 3> face{};
    for (int c = 0; c < 3; ++c) {
      face[c] = detail::parse_index(tokens[c], line.number);
      if (face[c] < 0 || face[c] >= vertex_count)
        throw IoError("line " + std::to_string(line.number) + ": vertex index out of range");
    }
    mesh.faces.push_back(face);
  }

  build_connectivity(mesh);  // abstract: just combinatorics; coords: derives lengths too

  if (abstract_mode) {
    const int edge_count = static_cast<int>(mesh.edges.size());
    std::unordered_map<long long, int> edge_index;
    edge_index.reserve(mesh.edges.size());
    for (int e = 0; e < edge_count; ++e)
      edge_index[static_cast<long long>(mesh.edges[e][0]) * vertex_count + mesh.edges[e][1]] = e;
    mesh.edge_lengths.assign(edge_count, 0.0);
    std::vector<bool> seen(edge_count, false);
    for (int e = 0; e < edge_count; ++e) {
      const auto& line = next_line("an edge length record");
      const auto tokens = detail::split_tokens(line.text);
      if (tokens.size() != 3)
        throw IoError("line " + std::to_string(line.number) + ": expected 'i j length'");
      int i = detail::parse_index(tokens[0], line.number);
      int j = detail::parse_index(tokens[1], line.number);
      if (i > j) std::swap(i, j);
      const auto found = edge_index.find(static_cast<long long>(i) * vertex_count + j);
      if (found == edge_index.end())
        throw IoError("line " + std::to_string(line.number) + ": edge (" + std::to_string(i) +
                      "," + std::to_string(j) + ") is not in the triangulation");
      if (seen[found->second])
        throw IoError("line " + std::to_string(line.number) + ": duplicate edge length");
      seen[found->second] = true;
      mesh.edge_lengths[found->second] = detail::parse_real(tokens[2], line.number);
    }
  }

  mesh.divisor.reserve(cone_count);
  for (int c = 0; c < cone_count; ++c) {
    const auto& line = next_line("a cone record");
    const auto tokens = detail::split_tokens(line.text);
    if (tokens.size() != 2)
      throw IoError("line " + std::to_string(line.number) + ": expected 'vertex_index beta'");
    mesh.divisor.emplace_back(detail::parse_index(tokens[0], line.number),
                              detail::parse_real(tokens[1], line.number));
  }

  if (at != lines.size())
    throw IoError("line " + std::to_string(lines[at].number) + ": trailing content");

  validate_mesh(mesh);
  return mesh;
}

// Writes coordinates when the stored lengths are exactly the Euclidean
// distances of the stored positions; otherwise falls back to the abstract
// length-list form (coordinate records would silently redefine the metric).
inline void write_mesh(const std::string& path, const ConicalMesh& mesh,
                       const std::vector<std::string>& comments = {}) {
  bool use_positions = !mesh.positions.empty();
  if (use_positions) {
    for (std::size_t e = 0; e < mesh.edges.size() && use_positions; ++e) {
      const auto& a = mesh.positions[mesh.edges[e][0]];
      const auto& b = mesh.positions[mesh.edges[e][1]];
      const double derived = std::sqrt((a[0] - b[0]) * (a[0] - b[0]) +
                                       (a[1] - b[1]) * (a[1] - b[1]) +
                                       (a[2] - b[2]) * (a[2] - b[2]));
      if (std::abs(derived - mesh.edge_lengths[e]) > 1e-14 * (1.0 + mesh.edge_lengths[e]))
        use_positions = false;
    }
  }

  std::ofstream out(path);
  if (!out) throw IoError("cannot write mesh file '" + path + "'");
  out << "conical-mesh 1\n";
  for (const auto& comment : comments) out << "# " << comment << "\n";
  out << mesh.vertex_count << " " << mesh.face_count() << " " << mesh.divisor.size() << "\n";
  if (use_positions) {
    for (const auto& p : mesh.positions)
      out << format_real(p[0]) << " " << format_real(p[1]) << " " << format_real(p[2]) << "\n";
  } else {
    for (int v = 0; v < mesh.vertex_count; ++v) out << "abstract\n";
  }
  for (const auto& f : mesh.faces) out << f[0] << " " << f[1] << " " << f[2] << "\n";
  if (!use_positions) {
    for (std::size_t e = 0; e < mesh.edges.size(); ++e)
      out << mesh.edges[e][0] << " " << mesh.edges[e][1] << " "
          << format_real(mesh.edge_lengths[e]) << "\n";
  }
  for (const auto& [vertex, beta] : mesh.divisor)
    out << vertex << " " << format_real(beta) << "\n";
  if (!out) throw IoError("failed writing mesh file '" + path + "'");
}

inline void write_field_csv(const std::string& path, const Eigen::VectorXd& values) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write field file '" + path + "'");
  out << "vertex_index,value\n";
  for (Eigen::Index v = 0; v < values.size(); ++v)
    out << v << "," << format_real(values[v]) << "\n";
  if (!out) throw IoError("failed writing field file '" + path + "'");
}

inline Eigen::VectorXd read_field_csv(const std::string& path, int expected_size) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open field file '" + path + "'");
  const auto lines = detail::effective_lines(in, 0);
  Eigen::VectorXd values = Eigen::VectorXd::Zero(expected_size);
  std::vector<bool> seen(expected_size, false);
  for (const auto& line : lines) {
    const auto tokens = detail::split_tokens(line.text);
    if (line.number == 1 && !tokens.empty() && tokens[0] == "vertex_index") continue;
    if (tokens.size() != 2)
      throw IoError("line " + std::to_string(line.number) + ": expected 'vertex_index,value'");
    const int v = detail::parse_index(tokens[0], line.number);
    if (v < 0 || v >= expected_size)
      throw IoError("line " + std::to_string(line.number) + ": vertex index out of range");
    if (seen[v])
      throw IoError("line " + std::to_string(line.number) + ": duplicate vertex index");
    seen[v] = true;
    values[v] = detail::parse_real(tokens[1], line.number);
  }
  for (int v = 0; v < expected_size; ++v)
    if (!seen[v]) throw IoError("'" + path + "': missing value for vertex " + std::to_string(v));
  return values;
}

}  // namespace kwflow
