// Copyright 2026 The bemctl Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <fstream>
#include <string>
#include <vector>

#include "bemctl/format.hpp"
#include "bemctl/smmpc.hpp"

namespace bemctl {

void write_offline_csv(const std::string& path, const OfflineData& data) {
  if (data.u.rows() != data.y.rows()) {
    throw DimensionError("write_offline_csv: u and y lengths differ");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "k";
  for (Eigen::Index i = 0; i < data.u.cols(); ++i) out << ",u_" << i;
  for (Eigen::Index i = 0; i < data.y.cols(); ++i) out << ",y_" << i;
  out << "\n";
  for (Eigen::Index t = 0; t < data.u.rows(); ++t) {
    out << t;
    for (Eigen::Index i = 0; i < data.u.cols(); ++i) out << ',' << format_double(data.u(t, i));
    for (Eigen::Index i = 0; i < data.y.cols(); ++i) out << ',' << format_double(data.y(t, i));
    out << "\n";
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

OfflineData read_offline_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw IoError("'" + path + "': empty file");
  const auto header = split_csv_line(line);
  if (header.empty() || header[0] != "k") {
    throw IoError("'" + path + "': header must start with 'k'");
  }
  Eigen::Index m = 0, p = 0;
  for (std::size_t i = 1; i < header.size(); ++i) {
    const std::string& h = header[i];
    if (h == "u_" + std::to_string(m) && p == 0) {
      ++m;
    } else if (h == "y_" + std::to_string(p)) {
      ++p;
    } else {
      throw IoError("'" + path + "': unexpected column '" + h + "'");
    }
  }
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw IoError("'" + path + "' line " + std::to_string(lineno) +
                    ": expected " + std::to_string(header.size()) + " fields");
    }
    std::vector<double> row;
    for (std::size_t i = 1; i < cells.size(); ++i) row.push_back(parse_double(cells[i]));
    rows.push_back(std::move(row));
  }
  OfflineData d;
  const auto T = static_cast<Eigen::Index>(rows.size());
  d.u.resize(T, m);
  d.y.resize(T, p);
  for (Eigen::Index t = 0; t < T; ++t) {
    const auto& r = rows[static_cast<std::size_t>(t)];
    for (Eigen::Index i = 0; i < m; ++i) d.u(t, i) = r[static_cast<std::size_t>(i)];
    for (Eigen::Index i = 0; i < p; ++i) d.y(t, i) = r[static_cast<std::size_t>(m + i)];
  }
  return d;
}

}  // namespace bemctl
