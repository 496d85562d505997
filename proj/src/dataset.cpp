#include "dkmpc/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dkmpc/errors.hpp"

namespace dkmpc {

namespace {

constexpr Scalar kTimestepTol = 1e-9;

bool is_input_name(const std::string& name) {
  if (name.empty() || name[0] != 'u') return false;
  if (name.size() == 1) return true;
  if (name[1] == '_') return true;
  return std::all_of(name.begin() + 1, name.end(),
                     [](unsigned char c) { return std::isdigit(c); });
}

Scalar parse_number(const std::string& field, long line_no) {
  Scalar value = 0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last)
    throw ParseError("not a number: '" + field + "'", line_no);
  return value;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

void append_formatted(std::string& out, Scalar v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

// Z-Y-X (yaw-pitch-roll) angles from a unit quaternion.
void quaternion_to_euler(Scalar qw, Scalar qx, Scalar qy, Scalar qz,
                         Scalar& roll, Scalar& pitch, Scalar& yaw) {
  roll = std::atan2(2 * (qw * qx + qy * qz), 1 - 2 * (qx * qx + qy * qy));
  const Scalar s = std::clamp(2 * (qw * qy - qz * qx), Scalar(-1), Scalar(1));
  pitch = std::asin(s);
  yaw = std::atan2(2 * (qw * qz + qx * qy), 1 - 2 * (qy * qy + qz * qz));
}

}  // namespace

void FlightRecord::validate() const {
  if (states.rows() < 2) throw EmptyDataset("record has fewer than 2 samples");
  if (inputs.rows() != states.rows())
    throw DimensionMismatch("state and input sample counts differ");
  if (states.cols() < 1) throw DimensionMismatch("record has no state features");
  if (inputs.cols() < 1) throw DimensionMismatch("record has no input features");
  if (!(dt > 0)) throw Error("record dt must be positive");
  if (state_names.size() != static_cast<size_t>(states.cols()) ||
      input_names.size() != static_cast<size_t>(inputs.cols()))
    throw DimensionMismatch("column names do not match feature counts");
}

Vec minmax_normalize(const Vec& v, const Vec& lo, const Vec& hi) {
  if (v.size() != lo.size() || v.size() != hi.size())
    throw DimensionMismatch("normalize: vector length does not match extrema");
  return (2 * (v - lo).array() / (hi - lo).array() - 1).matrix();
}

Vec minmax_denormalize(const Vec& v, const Vec& lo, const Vec& hi) {
  if (v.size() != lo.size() || v.size() != hi.size())
    throw DimensionMismatch("denormalize: vector length does not match extrema");
  return ((v.array() + 1) / 2 * (hi - lo).array() + lo.array()).matrix();
}

Vec Normalizer::normalize_state(const Vec& x) const {
  return minmax_normalize(x, state_min, state_max);
}

Vec Normalizer::denormalize_state(const Vec& x) const {
  return minmax_denormalize(x, state_min, state_max);
}

Vec Normalizer::normalize_input(const Vec& u) const {
  return minmax_normalize(u, input_min, input_max);
}

Vec Normalizer::denormalize_input(const Vec& u) const {
  return minmax_denormalize(u, input_min, input_max);
}

namespace {

Mat normalize_columns(const Mat& x, const Vec& lo, const Vec& hi) {
  if (x.cols() != lo.size())
    throw DimensionMismatch("batch normalize: feature count mismatch");
  Mat out(x.rows(), x.cols());
  for (Index i = 0; i < x.cols(); ++i)
    out.col(i) = 2 * (x.col(i).array() - lo[i]) / (hi[i] - lo[i]) - 1;
  return out;
}

}  // namespace

Mat Normalizer::normalize_states(const Mat& x) const {
  return normalize_columns(x, state_min, state_max);
}

Mat Normalizer::normalize_inputs(const Mat& u) const {
  return normalize_columns(u, input_min, input_max);
}

Normalizer fit_normalizer(const std::vector<FlightRecord>& records) {
  if (records.empty()) throw EmptyDataset("fit_normalizer: no records");
  for (const auto& r : records) r.validate();
  const Index n_x = records.front().state_dim();
  const Index n_u = records.front().input_dim();
  for (const auto& r : records)
    if (r.state_dim() != n_x || r.input_dim() != n_u)
      throw DimensionMismatch("fit_normalizer: records disagree on dims");

  Normalizer n;
  n.state_min = records.front().states.colwise().minCoeff().transpose();
  n.state_max = records.front().states.colwise().maxCoeff().transpose();
  n.input_min = records.front().inputs.colwise().minCoeff().transpose();
  n.input_max = records.front().inputs.colwise().maxCoeff().transpose();
  for (size_t i = 1; i < records.size(); ++i) {
    n.state_min = n.state_min.cwiseMin(
        records[i].states.colwise().minCoeff().transpose());
    n.state_max = n.state_max.cwiseMax(
        records[i].states.colwise().maxCoeff().transpose());
    n.input_min = n.input_min.cwiseMin(
        records[i].inputs.colwise().minCoeff().transpose());
    n.input_max = n.input_max.cwiseMax(
        records[i].inputs.colwise().maxCoeff().transpose());
  }
  for (Index i = 0; i < n_x; ++i)
    if (!(n.state_max[i] > n.state_min[i])) throw ConstantFeature(i);
  for (Index i = 0; i < n_u; ++i)
    if (!(n.input_max[i] > n.input_min[i])) throw ConstantFeature(n_x + i);
  return n;
}

std::array<Index, 2> segment_cuts(Index triples,
                                  const std::array<Scalar, 3>& fractions) {
  for (const auto& f : fractions)
    if (f < 0 || !std::isfinite(f)) throw BadSplit("fractions must be >= 0");
  const Scalar sum = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(sum - 1) > 1e-9) throw BadSplit("fractions must sum to 1");
  const Index b1 = static_cast<Index>(std::llround(fractions[0] * triples));
  const Index b2 = static_cast<Index>(
      std::llround((fractions[0] + fractions[1]) * triples));
  return {b1, b2};
}

std::array<TripleSet, 3> segment(const std::vector<FlightRecord>& records,
                                 const Normalizer& n,
                                 const std::array<Scalar, 3>& fractions) {
  if (records.empty()) throw EmptyDataset("segment: no records");
  segment_cuts(0, fractions);

  const Index n_x = records.front().state_dim();
  const Index n_u = records.front().input_dim();
  std::array<std::vector<Index>, 3> counts_per_record;

  // First pass sizes each split; boundaries are cumulative-rounded per record
  // so every record honors the fractions to within one triple.
  Index totals[3] = {0, 0, 0};
  std::vector<std::array<Index, 2>> cuts(records.size());
  for (size_t r = 0; r < records.size(); ++r) {
    records[r].validate();
    if (records[r].state_dim() != n_x || records[r].input_dim() != n_u)
      throw DimensionMismatch("segment: records disagree on dims");
    const Index m = records[r].length() - 1;
    const auto [b1, b2] = segment_cuts(m, fractions);
    cuts[r] = {b1, b2};
    totals[0] += b1;
    totals[1] += b2 - b1;
    totals[2] += m - b2;
  }

  std::array<TripleSet, 3> out;
  out[0].split = Split::kTrain;
  out[1].split = Split::kValidation;
  out[2].split = Split::kTest;
  for (int s = 0; s < 3; ++s) {
    out[s].x.resize(totals[s], n_x);
    out[s].u.resize(totals[s], n_u);
    out[s].x_next.resize(totals[s], n_x);
  }

  Index row[3] = {0, 0, 0};
  for (size_t r = 0; r < records.size(); ++r) {
    const Mat xs = n.normalize_states(records[r].states);
    const Mat us = n.normalize_inputs(records[r].inputs);
    const Index m = records[r].length() - 1;
    for (Index k = 0; k < m; ++k) {
      const int s = k < cuts[r][0] ? 0 : (k < cuts[r][1] ? 1 : 2);
      out[s].x.row(row[s]) = xs.row(k);
      out[s].u.row(row[s]) = us.row(k);
      out[s].x_next.row(row[s]) = xs.row(k + 1);
      ++row[s];
    }
  }
  return out;
}

FlightRecord load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open: " + path);

  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty file", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_fields(line);
  if (header.empty() || header[0] != "t")
    throw ParseError("header must start with 't'", 1);

  std::vector<std::string> state_names, input_names;
  for (size_t i = 1; i < header.size(); ++i) {
    if (is_input_name(header[i])) {
      input_names.push_back(header[i]);
    } else {
      if (!input_names.empty())
        throw ParseError("state column '" + header[i] + "' after inputs", 1);
      state_names.push_back(header[i]);
    }
  }
  if (state_names.empty()) throw ParseError("no state columns", 1);
  if (input_names.empty()) throw ParseError("no input columns", 1);
  const size_t n_cols = header.size();

  std::vector<Scalar> times;
  std::vector<Scalar> state_values, input_values;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != n_cols)
      throw ParseError("expected " + std::to_string(n_cols) + " fields, got " +
                           std::to_string(fields.size()),
                       line_no);
    times.push_back(parse_number(fields[0], line_no));
    for (size_t i = 0; i < state_names.size(); ++i)
      state_values.push_back(parse_number(fields[1 + i], line_no));
    for (size_t i = 0; i < input_names.size(); ++i)
      input_values.push_back(
          parse_number(fields[1 + state_names.size() + i], line_no));
    if (times.size() >= 2) {
      const size_t k = times.size() - 1;
      if (times[k] <= times[k - 1])
        throw ParseError("timestamps must strictly increase", line_no);
      const Scalar dt0 = times[1] - times[0];
      if (std::abs((times[k] - times[k - 1]) - dt0) > kTimestepTol)
        throw NonUniformTimestep("timestep deviates from first interval",
                                 line_no);
    }
  }
  if (times.size() < 2) throw ParseError("need at least 2 data rows", line_no);

  FlightRecord rec;
  rec.dt = times[1] - times[0];
  rec.t0 = times[0];
  rec.state_names = state_names;
  rec.input_names = input_names;
  const Index T = static_cast<Index>(times.size());
  rec.states = Eigen::Map<const Mat>(state_values.data(), T,
                                     static_cast<Index>(state_names.size()));
  rec.inputs = Eigen::Map<const Mat>(input_values.data(), T,
                                     static_cast<Index>(input_names.size()));

  // Quaternion logs become Euler angles so one orientation convention holds
  // everywhere downstream.
  const auto qw = std::find(rec.state_names.begin(), rec.state_names.end(), "qw");
  if (qw != rec.state_names.end()) {
    const Index q0 = qw - rec.state_names.begin();
    const bool run = q0 + 3 < rec.states.cols() &&
                     rec.state_names[q0 + 1] == "qx" &&
                     rec.state_names[q0 + 2] == "qy" &&
                     rec.state_names[q0 + 3] == "qz";
    if (!run) throw ParseError("qw must be followed by qx,qy,qz", 1);
    Mat converted(T, rec.states.cols() - 1);
    converted.leftCols(q0) = rec.states.leftCols(q0);
    converted.rightCols(rec.states.cols() - q0 - 4) =
        rec.states.rightCols(rec.states.cols() - q0 - 4);
    for (Index k = 0; k < T; ++k) {
      Scalar roll, pitch, yaw;
      quaternion_to_euler(rec.states(k, q0), rec.states(k, q0 + 1),
                          rec.states(k, q0 + 2), rec.states(k, q0 + 3), roll,
                          pitch, yaw);
      converted(k, q0) = roll;
      converted(k, q0 + 1) = pitch;
      converted(k, q0 + 2) = yaw;
    }
    rec.states = std::move(converted);
    rec.state_names.erase(rec.state_names.begin() + q0,
                          rec.state_names.begin() + q0 + 4);
    rec.state_names.insert(rec.state_names.begin() + q0,
                           {"roll", "pitch", "yaw"});
  }

  rec.validate();
  return rec;
}

void write_csv(const FlightRecord& record, const std::string& path) {
  record.validate();
  std::ofstream out(path);
  if (!out) throw Error("cannot write: " + path);

  std::string buf = "t";
  for (const auto& name : record.state_names) buf += "," + name;
  for (const auto& name : record.input_names) buf += "," + name;
  buf += "\n";
  for (Index k = 0; k < record.length(); ++k) {
    append_formatted(buf, record.t0 + static_cast<Scalar>(k) * record.dt);
    for (Index i = 0; i < record.state_dim(); ++i) {
      buf += ',';
      append_formatted(buf, record.states(k, i));
    }
    for (Index i = 0; i < record.input_dim(); ++i) {
      buf += ',';
      append_formatted(buf, record.inputs(k, i));
    }
    buf += '\n';
  }
  out << buf;
  if (!out) throw Error("write failed: " + path);
}

void save_normalizer(const Normalizer& n, const std::string& path) {
  nlohmann::json j;
  const auto to_list = [](const Vec& v) {
    return std::vector<Scalar>(v.data(), v.data() + v.size());
  };
  j["state_min"] = to_list(n.state_min);
  j["state_max"] = to_list(n.state_max);
  j["input_min"] = to_list(n.input_min);
  j["input_max"] = to_list(n.input_max);
  std::ofstream out(path);
  if (!out) throw Error("cannot write: " + path);
  out << j.dump(2) << "\n";
}

Normalizer load_normalizer(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open: " + path);
  nlohmann::json j;
  in >> j;
  const auto to_vec = [&](const char* key) {
    const auto list = j.at(key).get<std::vector<Scalar>>();
    return Vec(Eigen::Map<const Vec>(list.data(), list.size()));
  };
  Normalizer n;
  n.state_min = to_vec("state_min");
  n.state_max = to_vec("state_max");
  n.input_min = to_vec("input_min");
  n.input_max = to_vec("input_max");
  if (n.state_min.size() != n.state_max.size() ||
      n.input_min.size() != n.input_max.size())
    throw DimensionMismatch("normalizer extrema lengths disagree");
  return n;
}

}  // namespace dkmpc
