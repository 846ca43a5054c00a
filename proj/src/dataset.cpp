#include "sope/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace sope {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

void write_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_csv: cannot open " + path);
  out << "traj_id,t,s";
  for (int d = 0; d < data.dim; ++d) out << ",x_" << d;
  out << ",a,y,r\n";
  for (int i = 0; i < data.n; ++i) {
    for (int t = 0; t < data.T; ++t) {
      int row = data.idx(i, t);
      out << i << ',' << t << ',' << data.s[row];
      for (double v : data.xrow(row)) out << ',' << fmt_double(v);
      out << ',' << data.a[row] << ',' << data.y[row] << ',' << fmt_double(data.r[row])
          << '\n';
    }
  }
  if (!out) throw std::runtime_error("write_csv: write failed for " + path);
}

Dataset read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("read_csv: empty file " + path);
  auto header = split_line(line);
  if (header.size() < 6 || header[0] != "traj_id" || header[1] != "t" || header[2] != "s")
    throw std::runtime_error("read_csv: unexpected header in " + path);
  int dim = static_cast<int>(header.size()) - 6;
  for (int d = 0; d < dim; ++d)
    if (header[3 + d] != "x_" + std::to_string(d))
      throw std::runtime_error("read_csv: unexpected context columns in " + path);

  // Rows may arrive in any order; index by (traj_id, t) once T is known.
  struct Row {
    int i, t, s, a, y;
    double r;
    std::vector<double> x;
  };
  std::vector<Row> rows;
  int max_traj = -1, max_t = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_line(line);
    if (static_cast<int>(f.size()) != 6 + dim)
      throw std::runtime_error("read_csv: ragged row in " + path);
    Row row;
    row.i = std::stoi(f[0]);
    row.t = std::stoi(f[1]);
    row.s = std::stoi(f[2]);
    row.x.resize(dim);
    for (int d = 0; d < dim; ++d) row.x[d] = std::stod(f[3 + d]);
    row.a = std::stoi(f[3 + dim]);
    row.y = std::stoi(f[4 + dim]);
    row.r = std::stod(f[5 + dim]);
    if (row.i < 0 || row.t < 0) throw std::runtime_error("read_csv: negative index in " + path);
    max_traj = std::max(max_traj, row.i);
    max_t = std::max(max_t, row.t);
    rows.push_back(std::move(row));
  }

  Dataset data;
  data.n = max_traj + 1;
  data.T = max_t + 1;
  data.dim = dim;
  if (static_cast<int>(rows.size()) != data.rows())
    throw std::runtime_error("read_csv: expected n*T rows in " + path);
  data.x.assign(static_cast<std::size_t>(data.rows()) * dim, 0.0);
  data.s.assign(data.rows(), -1);
  data.a.assign(data.rows(), 0);
  data.y.assign(data.rows(), 0);
  data.r.assign(data.rows(), 0.0);
  for (const Row& row : rows) {
    int at = data.idx(row.i, row.t);
    if (data.s[at] != -1) throw std::runtime_error("read_csv: duplicate (traj_id,t) in " + path);
    data.s[at] = row.s;
    data.a[at] = row.a;
    data.y[at] = row.y;
    data.r[at] = row.r;
    for (int d = 0; d < dim; ++d) data.x[static_cast<std::size_t>(at) * dim + d] = row.x[d];
  }
  for (int v : data.s)
    if (v == -1) throw std::runtime_error("read_csv: missing (traj_id,t) rows in " + path);
  return data;
}

}  // namespace sope
