#pragma once

// Versioned JSON model documents. Log widths and log delta m are the
// authoritative values; the plain widths and delta m are written alongside for
// readers and must agree with them on load.

#include "occam/bit_cost.hpp"
#include "occam/errors.hpp"
#include "occam/mixture_model.hpp"
#include "occam/optimizer.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

namespace occam::io {

inline constexpr int kModelVersion = 1;
inline constexpr const char* kModelFormat = "occam-mixture-model";

namespace detail {

using nlohmann::json;

inline json num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline double get_num(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw FormatError("expected a number, got " + j.dump());
}

inline json vec(const Vector& v) {
  json a = json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

inline Vector get_vec(const json& j, const char* what) {
  if (!j.is_array()) throw FormatError(std::string(what) + " must be an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = get_num(j[i]);
  return v;
}

inline json mat(const Matrix& m) {
  json a = json::array();
  for (int r = 0; r < m.rows(); ++r) a.push_back(vec(m.row(r).transpose()));
  return a;
}

inline Matrix get_mat(const json& j, int rows, int cols, const char* what) {
  if (!j.is_array() || static_cast<int>(j.size()) != rows)
    throw FormatError(std::string(what) + " must have " + std::to_string(rows) + " rows");
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const Vector v = get_vec(j[static_cast<std::size_t>(r)], what);
    if (v.size() != cols) throw FormatError(std::string(what) + " rows must have " + std::to_string(cols) + " entries");
    m.row(r) = v.transpose();
  }
  return m;
}

inline std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline bool close(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(std::abs(a), std::abs(b)); }

} // namespace detail

inline nlohmann::json model_to_json(const FitResult& f) {
  using detail::num;
  using detail::vec;
  nlohmann::json j;
  j["format"] = kModelFormat;
  j["version"] = kModelVersion;
  j["scheme"] = std::string(to_string(f.params.scheme));
  j["n_components"] = f.params.n_components();
  j["n_dim"] = f.params.n_dim();
  j["weights"] = vec(f.params.component_weights());
  j["amp_raw"] = vec(f.params.amp_raw);
  j["means"] = detail::mat(f.params.means);
  j["log_widths"] = detail::mat(f.params.log_widths);
  j["widths"] = detail::mat(f.params.widths());
  j["log_delta_m"] = vec(f.delta_m.log_values);
  j["delta_m"] = vec(f.delta_m.values());
  j["mode"] = std::string(to_string(f.mode));
  j["delta_x"] = num(f.delta_x);
  j["q"] = {{"q_l", num(f.q.q_l)},       {"q_delta", num(f.q.q_delta)}, {"q_r", num(f.q.q_r)},
            {"q_total", num(f.q.q_total)}, {"valid", f.q.valid},          {"floored", f.q.floored}};
  j["valid"] = f.valid;
  j["runaway_width"] = f.runaway_width;
  j["pruned"] = f.pruned;
  j["stage_history"] = vec(Eigen::Map<const Vector>(f.stage_history.data(),
                                                    static_cast<Eigen::Index>(f.stage_history.size())));
  j["provenance"] = {{"seed", f.provenance.seed},
                     {"config_hash", detail::hex64(f.provenance.config_hash)},
                     {"evaluations", f.provenance.evaluations}};
  return j;
}

inline FitResult model_from_json(const nlohmann::json& j) {
  using detail::get_num;
  using detail::get_vec;
  try {
    if (!j.is_object() || j.value("format", std::string()) != kModelFormat)
      throw FormatError("not a mixture model document");
    const int version = j.at("version").get<int>();
    if (version != kModelVersion)
      throw FormatError("unsupported model version " + std::to_string(version) + " (expected " +
                        std::to_string(kModelVersion) + ")");
    FitResult f;
    f.params.scheme = parse_scheme(j.at("scheme").get<std::string>());
    const int na = j.at("n_components").get<int>(), nd = j.at("n_dim").get<int>();
    if (na < 1 || nd < 1) throw FormatError("component and dimension counts must be positive");
    f.params.amp_raw = get_vec(j.at("amp_raw"), "amp_raw");
    f.params.means = detail::get_mat(j.at("means"), na, nd, "means");
    f.params.log_widths = detail::get_mat(j.at("log_widths"), na, nd, "log_widths");
    const Matrix widths = detail::get_mat(j.at("widths"), na, nd, "widths");
    for (int i = 0; i < na; ++i)
      for (int d = 0; d < nd; ++d) {
        if (!(widths(i, d) > 0.0)) throw InvalidArgument("widths must be positive");
        if (!detail::close(widths(i, d), std::exp(f.params.log_widths(i, d))))
          throw InvalidArgument("widths disagree with log_widths");
      }
    f.params.validate();

    f.delta_m.log_values = get_vec(j.at("log_delta_m"), "log_delta_m");
    const Vector dm = get_vec(j.at("delta_m"), "delta_m");
    if (f.delta_m.size() != f.params.n_params() || dm.size() != f.delta_m.size())
      throw InvalidArgument("delta m length does not match the parameter count");
    for (int k = 0; k < dm.size(); ++k) {
      if (!(dm[k] > 0.0)) throw InvalidArgument("delta m values must be positive");
      if (!detail::close(dm[k], std::exp(f.delta_m.log_values[k])))
        throw InvalidArgument("delta_m disagrees with log_delta_m");
    }
    f.mode = parse_mode(j.at("mode").get<std::string>());
    f.delta_x = get_num(j.at("delta_x"));
    if (!(f.delta_x > 0.0)) throw InvalidArgument("delta_x must be positive");
    f.delta_m.validate(std::max(1.0, f.delta_x));

    const auto& q = j.at("q");
    f.q.q_l = get_num(q.at("q_l"));
    f.q.q_delta = get_num(q.at("q_delta"));
    f.q.q_r = get_num(q.at("q_r"));
    f.q.q_total = get_num(q.at("q_total"));
    f.q.valid = q.at("valid").get<bool>();
    f.q.floored = q.at("floored").get<bool>();
    f.valid = j.at("valid").get<bool>();
    f.runaway_width = j.at("runaway_width").get<bool>();
    f.pruned = j.at("pruned").get<std::vector<int>>();
    const Vector hist = get_vec(j.at("stage_history"), "stage_history");
    f.stage_history.assign(hist.data(), hist.data() + hist.size());
    const auto& p = j.at("provenance");
    f.provenance.seed = p.at("seed").get<std::uint64_t>();
    f.provenance.config_hash = std::stoull(p.at("config_hash").get<std::string>(), nullptr, 16);
    f.provenance.evaluations = p.at("evaluations").get<long>();
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed model document: ") + e.what());
  } catch (const DegenerateParameterError& e) {
    throw InvalidArgument(e.what());
  }
}

inline std::string model_to_string(const FitResult& f) { return model_to_json(f).dump(2) + "\n"; }

inline FitResult model_from_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model file is not valid JSON: ") + e.what());
  }
  return model_from_json(j);
}

inline void save_model(const std::string& path, const FitResult& f) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << model_to_string(f);
  if (!out) throw IoError("write to '" + path + "' failed");
}

inline FitResult load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return model_from_string(ss.str());
}

} // namespace occam::io
