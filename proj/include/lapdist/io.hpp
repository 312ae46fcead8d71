// Copyright 2026 The lapdist Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef LAPDIST_IO_HPP_
#define LAPDIST_IO_HPP_

#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "lapdist/graph.hpp"

namespace lapdist {

// Edge-list format:
//   n m W
//   u v w      (m lines)
// Lines starting with '#' are comments.

namespace detail {

inline bool next_data_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    const auto pos = line.find_first_not_of(" \t\r");
    if (pos == std::string::npos || line[pos] == '#') continue;
    return true;
  }
  return false;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw graph_error(graph_error::Kind::parse, "cannot open '" + path + "'");
  return in;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw graph_error(graph_error::Kind::parse, "cannot write '" + path + "'");
  return out;
}

}  // namespace detail

inline WeightedGraph read_graph(std::istream& in) {
  using K = graph_error::Kind;
  std::string line;
  if (!detail::next_data_line(in, line)) throw graph_error(K::parse, "missing header 'n m W'");
  std::istringstream header(line);
  long long n = 0, m = 0, cap = 0;
  if (!(header >> n >> m >> cap) || n < 0 || m < 0 || cap < 1) {
    throw graph_error(K::parse, "malformed header '" + line + "'");
  }
  WeightedGraph g(static_cast<NodeId>(n));
  for (long long i = 0; i < m; ++i) {
    if (!detail::next_data_line(in, line)) {
      throw graph_error(K::parse, "expected " + std::to_string(m) + " edges, got " + std::to_string(i));
    }
    std::istringstream row(line);
    long long u = 0, v = 0;
    double w = 0;
    if (!(row >> u >> v >> w)) throw graph_error(K::parse, "malformed edge line '" + line + "'");
    g.add_edge(static_cast<NodeId>(u), static_cast<NodeId>(v), w);
  }
  validate_input_weights(g, cap);
  return g;
}

inline WeightedGraph read_graph_file(const std::string& path) {
  auto in = detail::open_in(path);
  return read_graph(in);
}

inline void write_graph(std::ostream& out, const WeightedGraph& g) {
  out << g.num_nodes() << ' ' << g.num_edges() << ' ' << g.weight_cap() << '\n';
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& e : g.edges()) out << e.u << ' ' << e.v << ' ' << e.weight << '\n';
}

inline void write_graph_file(const std::string& path, const WeightedGraph& g) {
  auto out = detail::open_out(path);
  write_graph(out, g);
}

/// One part per line, node ids separated by whitespace.
inline Partition read_partition(std::istream& in) {
  Partition p;
  std::string line;
  while (detail::next_data_line(in, line)) {
    std::istringstream row(line);
    std::vector<NodeId> part;
    long long u = 0;
    while (row >> u) part.push_back(static_cast<NodeId>(u));
    if (!row.eof()) throw graph_error(graph_error::Kind::parse, "malformed part line '" + line + "'");
    p.parts.push_back(std::move(part));
  }
  return p;
}

inline Partition read_partition_file(const std::string& path) {
  auto in = detail::open_in(path);
  return read_partition(in);
}

inline void write_partition(std::ostream& out, const Partition& p) {
  for (const auto& part : p.parts) {
    for (std::size_t i = 0; i < part.size(); ++i) out << (i ? " " : "") << part[i];
    out << '\n';
  }
}

/// Whitespace-separated reals.
inline Vector read_vector(std::istream& in) {
  std::vector<double> values;
  std::string line;
  while (detail::next_data_line(in, line)) {
    std::istringstream row(line);
    double x = 0;
    while (row >> x) values.push_back(x);
    if (!row.eof()) throw graph_error(graph_error::Kind::parse, "malformed vector line '" + line + "'");
  }
  Vector v(static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) v[static_cast<Eigen::Index>(i)] = values[i];
  return v;
}

inline Vector read_vector_file(const std::string& path) {
  auto in = detail::open_in(path);
  return read_vector(in);
}

inline void write_vector(std::ostream& out, const Vector& v) {
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Eigen::Index i = 0; i < v.size(); ++i) out << v[i] << '\n';
}

/// Node ids, whitespace separated.
inline std::vector<NodeId> read_node_set(std::istream& in) {
  std::vector<NodeId> out;
  std::string line;
  while (detail::next_data_line(in, line)) {
    std::istringstream row(line);
    long long u = 0;
    while (row >> u) out.push_back(static_cast<NodeId>(u));
  }
  return out;
}

inline std::vector<NodeId> read_node_set_file(const std::string& path) {
  auto in = detail::open_in(path);
  return read_node_set(in);
}

}  // namespace lapdist

#endif  // LAPDIST_IO_HPP_
