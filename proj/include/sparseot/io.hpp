#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sparseot/icnn.hpp"
#include "sparseot/trainer.hpp"

namespace sparseot {

namespace detail {

inline bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

inline void save_matrix_csv(const PointCloud& cloud, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("save matrix: cannot open " + path);
  for (Eigen::Index j = 0; j < cloud.cols(); ++j)
    out << (j ? ",x" : "x") << j;
  out << "\n";
  char buf[40];
  for (Eigen::Index i = 0; i < cloud.rows(); ++i) {
    for (Eigen::Index j = 0; j < cloud.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", cloud(i, j));
      if (j) out << ',';
      out << buf;
    }
    out << "\n";
  }
  if (!out) throw IoError("save matrix: write failed for " + path);
}

// layout: "SOTM", u32 version, u64 rows, u64 cols, doubles row-major
// (little-endian, as on every target this builds for)
inline void save_matrix_binary(const PointCloud& cloud,
                               const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("save matrix: cannot open " + path);
  out.write("SOTM", 4);
  write_pod<uint32_t>(out, 1);
  write_pod<uint64_t>(out, static_cast<uint64_t>(cloud.rows()));
  write_pod<uint64_t>(out, static_cast<uint64_t>(cloud.cols()));
  for (Eigen::Index i = 0; i < cloud.rows(); ++i)
    for (Eigen::Index j = 0; j < cloud.cols(); ++j)
      write_pod<double>(out, cloud(i, j));
  if (!out) throw IoError("save matrix: write failed for " + path);
}

inline PointCloud load_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load matrix: cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw IoError("load matrix: " + path + " is empty");
  Eigen::Index cols = 1;
  for (char c : line) cols += c == ',';

  std::vector<double> values;
  long line_no = 1;
  auto fail = [&](const std::string& what) {
    throw IoError("load matrix: " + path + " line " +
                  std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() && in.peek() == EOF) break;
    Eigen::Index got = 0;
    const char* p = line.c_str();
    while (true) {
      char* end = nullptr;
      double v = std::strtod(p, &end);
      if (end == p) fail("malformed number");
      if (std::isnan(v)) fail("NaN entry rejected");
      values.push_back(v);
      ++got;
      p = end;
      if (*p == '\0' || *p == '\r') break;
      if (*p != ',') fail("malformed number");
      ++p;
    }
    if (got != cols)
      fail("expected " + std::to_string(cols) + " fields, got " +
           std::to_string(got));
  }
  if (values.empty()) throw IoError("load matrix: " + path + " has no rows");
  Eigen::Index rows = static_cast<Eigen::Index>(values.size()) / cols;
  PointCloud cloud(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) cloud(i, j) = values[i * cols + j];
  return cloud;
}

inline PointCloud load_matrix_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load matrix: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "SOTM")
    throw IoError("load matrix: " + path + " is not a matrix file");
  uint32_t version = read_pod<uint32_t>(in);
  if (version != 1)
    throw IoError("load matrix: unsupported version in " + path);
  uint64_t rows = read_pod<uint64_t>(in);
  uint64_t cols = read_pod<uint64_t>(in);
  PointCloud cloud(static_cast<Eigen::Index>(rows),
                   static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < cloud.rows(); ++i)
    for (Eigen::Index j = 0; j < cloud.cols(); ++j) {
      double v = read_pod<double>(in);
      if (std::isnan(v))
        throw IoError("load matrix: NaN entry in " + path);
      cloud(i, j) = v;
    }
  return cloud;
}

}  // namespace detail

// Format follows the extension: .csv is a header-plus-rows text table that
// round-trips doubles at 17 significant digits, anything else is the binary
// container.
inline void save_matrix(const PointCloud& cloud, const std::string& path) {
  require(cloud.rows() > 0 && cloud.cols() > 0, "save matrix: empty matrix");
  if (!cloud.allFinite())
    throw NumericalError("save matrix: non-finite entries");
  if (detail::ends_with(path, ".csv"))
    detail::save_matrix_csv(cloud, path);
  else
    detail::save_matrix_binary(cloud, path);
}

inline PointCloud load_matrix(const std::string& path) {
  if (detail::ends_with(path, ".csv")) return detail::load_matrix_csv(path);
  return detail::load_matrix_binary(path);
}

inline nlohmann::ordered_json record_to_json(const TrajectoryRecord& rec) {
  nlohmann::ordered_json row;
  row["iter"] = rec.iter;
  row["lambda"] = rec.lambda;
  row["obj"] = rec.obj;
  row["spa"] = rec.spa;
  row["res"] = rec.res;
  row["eval"] = rec.eval;
  row["dim"] = rec.dim;
  if (rec.has_accepted) row["accepted"] = rec.accepted;
  return row;
}

// One JSON object per line, in iteration order.
inline void save_trajectory(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("save trajectory: cannot open " + path);
  for (const auto& rec : traj) out << record_to_json(rec).dump() << "\n";
  if (!out) throw IoError("save trajectory: write failed for " + path);
}

inline Trajectory load_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load trajectory: cannot open " + path);
  Trajectory traj;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json row = nlohmann::json::parse(line, nullptr, false);
    if (row.is_discarded() || !row.is_object())
      throw IoError("load trajectory: " + path + " line " +
                    std::to_string(line_no) + ": malformed JSON");
    TrajectoryRecord rec;
    try {
      rec.iter = row.at("iter").get<long>();
      rec.lambda = row.at("lambda").get<double>();
      rec.obj = row.at("obj").get<double>();
      rec.spa = row.at("spa").get<double>();
      rec.res = row.at("res").get<double>();
      rec.eval = row.at("eval").get<double>();
      rec.dim = row.at("dim").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw IoError("load trajectory: " + path + " line " +
                    std::to_string(line_no) + ": " + e.what());
    }
    if (row.contains("accepted")) {
      rec.has_accepted = true;
      rec.accepted = row["accepted"].get<bool>();
    }
    traj.push_back(rec);
  }
  return traj;
}

}  // namespace sparseot
