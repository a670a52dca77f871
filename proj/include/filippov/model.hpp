#pragma once

#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "filippov/error.hpp"
#include "filippov/linalg.hpp"

namespace filippov {

/// Mode1 is active on {c^T x + f <= 0}, Mode2 on {c^T x + f >= 0}.
enum class ModeId { Mode1 = 1, Mode2 = 2 };

constexpr ModeId other(ModeId m) { return m == ModeId::Mode1 ? ModeId::Mode2 : ModeId::Mode1; }
constexpr int index_of(ModeId m) { return m == ModeId::Mode1 ? 1 : 2; }

/// Unvalidated system data, as read from disk or assembled by a caller.
struct RawSystem {
  long n = 0;
  std::vector<std::vector<double>> A1, A2;
  std::vector<double> e1, e2, c;
  double f = 0.0;
};

class BimodalSystem;
BimodalSystem validate(const RawSystem& raw);

/// The sextuple (A1, A2, e1, e2, c, f). Immutable once constructed; the only
/// way to obtain one is through validate(), so every instance is consistent.
class BimodalSystem {
 public:
  Index n() const { return c_.size(); }
  const MatrixXd& A(ModeId m) const { return m == ModeId::Mode1 ? A1_ : A2_; }
  const VectorXd& e(ModeId m) const { return m == ModeId::Mode1 ? e1_ : e2_; }
  const MatrixXd& A1() const { return A1_; }
  const MatrixXd& A2() const { return A2_; }
  const VectorXd& e1() const { return e1_; }
  const VectorXd& e2() const { return e2_; }
  const VectorXd& c() const { return c_; }
  double f() const { return f_; }

  /// c^T x + f.
  double surface(const VectorXd& x) const { return c_.dot(x) + f_; }
  VectorXd field(ModeId m, const VectorXd& x) const { return A(m) * x + e(m); }

  RawSystem raw() const {
    RawSystem r;
    r.n = static_cast<long>(n());
    auto rows = [](const MatrixXd& M) {
      std::vector<std::vector<double>> out(M.rows(), std::vector<double>(M.cols()));
      for (Index i = 0; i < M.rows(); ++i)
        for (Index j = 0; j < M.cols(); ++j) out[i][j] = M(i, j);
      return out;
    };
    auto vec = [](const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    r.A1 = rows(A1_);
    r.A2 = rows(A2_);
    r.e1 = vec(e1_);
    r.e2 = vec(e2_);
    r.c = vec(c_);
    r.f = f_;
    return r;
  }

  bool operator==(const BimodalSystem& o) const {
    return A1_ == o.A1_ && A2_ == o.A2_ && e1_ == o.e1_ && e2_ == o.e2_ && c_ == o.c_ && f_ == o.f_;
  }

 private:
  friend BimodalSystem validate(const RawSystem& raw);
  friend BimodalSystem make_system(MatrixXd, MatrixXd, VectorXd, VectorXd, VectorXd, double);

  BimodalSystem(MatrixXd A1, MatrixXd A2, VectorXd e1, VectorXd e2, VectorXd c, double f)
      : A1_(std::move(A1)), A2_(std::move(A2)), e1_(std::move(e1)), e2_(std::move(e2)),
        c_(std::move(c)), f_(f) {}

  MatrixXd A1_, A2_;
  VectorXd e1_, e2_, c_;
  double f_;
};

namespace detail {

inline MatrixXd to_matrix(const std::vector<std::vector<double>>& rows, long n, const char* name) {
  if (static_cast<long>(rows.size()) != n)
    throw Error(ErrorKind::DimensionMismatch,
                std::string(name) + " has " + std::to_string(rows.size()) + " rows, expected " +
                    std::to_string(n));
  MatrixXd M(n, n);
  for (long i = 0; i < n; ++i) {
    if (static_cast<long>(rows[i].size()) != n)
      throw Error(ErrorKind::DimensionMismatch,
                  std::string(name) + " row " + std::to_string(i) + " has " +
                      std::to_string(rows[i].size()) + " entries, expected " + std::to_string(n));
    for (long j = 0; j < n; ++j) M(i, j) = rows[i][j];
  }
  return M;
}

inline VectorXd to_vector(const std::vector<double>& v, long n, const char* name) {
  if (static_cast<long>(v.size()) != n)
    throw Error(ErrorKind::DimensionMismatch, std::string(name) + " has " + std::to_string(v.size()) +
                                                  " entries, expected " + std::to_string(n));
  return Eigen::Map<const VectorXd>(v.data(), n);
}

}  // namespace detail

/// Checks shapes, finiteness and c != 0. Never rescales or repairs data.
inline BimodalSystem validate(const RawSystem& raw) {
  if (raw.n < 1) throw Error(ErrorKind::DimensionMismatch, "n must be >= 1");
  MatrixXd A1 = detail::to_matrix(raw.A1, raw.n, "A1");
  MatrixXd A2 = detail::to_matrix(raw.A2, raw.n, "A2");
  VectorXd e1 = detail::to_vector(raw.e1, raw.n, "e1");
  VectorXd e2 = detail::to_vector(raw.e2, raw.n, "e2");
  VectorXd c = detail::to_vector(raw.c, raw.n, "c");
  if (!A1.allFinite() || !A2.allFinite() || !e1.allFinite() || !e2.allFinite() || !c.allFinite() ||
      !std::isfinite(raw.f))
    throw Error(ErrorKind::NonFiniteEntry, "system contains NaN or infinite entries");
  if (c.isZero(0.0)) throw Error(ErrorKind::ZeroNormal, "switching normal c is the zero vector");
  return BimodalSystem(std::move(A1), std::move(A2), std::move(e1), std::move(e2), std::move(c), raw.f);
}

/// Convenience constructor from Eigen objects; runs the same validation.
inline BimodalSystem make_system(MatrixXd A1, MatrixXd A2, VectorXd e1, VectorXd e2, VectorXd c,
                                 double f) {
  const Index n = c.size();
  if (n < 1 || A1.rows() != n || A1.cols() != n || A2.rows() != n || A2.cols() != n ||
      e1.size() != n || e2.size() != n)
    throw Error(ErrorKind::DimensionMismatch, "inconsistent system dimensions");
  if (!A1.allFinite() || !A2.allFinite() || !e1.allFinite() || !e2.allFinite() || !c.allFinite() ||
      !std::isfinite(f))
    throw Error(ErrorKind::NonFiniteEntry, "system contains NaN or infinite entries");
  if (c.isZero(0.0)) throw Error(ErrorKind::ZeroNormal, "switching normal c is the zero vector");
  return BimodalSystem(std::move(A1), std::move(A2), std::move(e1), std::move(e2), std::move(c), f);
}

/// (-A1, -A2, -e1, -e2, c, f): forward solutions of the result are the
/// time-reversed solutions of sys.
inline BimodalSystem reverse_time(const BimodalSystem& sys) {
  return make_system(-sys.A1(), -sys.A2(), -sys.e1(), -sys.e2(), sys.c(), sys.f());
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const BimodalSystem& sys) {
  const RawSystem r = sys.raw();
  return nlohmann::json{{"n", r.n}, {"A1", r.A1}, {"A2", r.A2}, {"e1", r.e1},
                        {"e2", r.e2}, {"c", r.c},   {"f", r.f}};
}

inline RawSystem raw_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorKind::MalformedInput, "system description must be a JSON object");
  RawSystem r;
  try {
    for (const char* key : {"n", "A1", "A2", "e1", "e2", "c", "f"}) {
      if (!j.contains(key)) throw Error(ErrorKind::MalformedInput, std::string("missing key '") + key + "'");
    }
    if (!j.at("n").is_number_integer()) throw Error(ErrorKind::MalformedInput, "'n' must be an integer");
    r.n = j.at("n").get<long>();
    r.A1 = j.at("A1").get<std::vector<std::vector<double>>>();
    r.A2 = j.at("A2").get<std::vector<std::vector<double>>>();
    r.e1 = j.at("e1").get<std::vector<double>>();
    r.e2 = j.at("e2").get<std::vector<double>>();
    r.c = j.at("c").get<std::vector<double>>();
    if (!j.at("f").is_number()) throw Error(ErrorKind::MalformedInput, "'f' must be a number");
    r.f = j.at("f").get<double>();
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorKind::MalformedInput, ex.what());
  }
  return r;
}

inline BimodalSystem from_json(const nlohmann::json& j) { return validate(raw_from_json(j)); }

inline BimodalSystem parse_system(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& ex) {
    throw Error(ErrorKind::MalformedInput, ex.what());
  }
  return from_json(j);
}

// ---------------------------------------------------------------------------
// Fixtures

struct FixtureParams {
  std::map<std::string, std::string> values;

  bool has(const std::string& key) const { return values.count(key) != 0; }
};

namespace detail {

inline double parse_number(const std::string& s) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw Error(ErrorKind::MalformedInput, "not a number: '" + s + "'");
  }
  if (pos != s.size()) throw Error(ErrorKind::MalformedInput, "not a number: '" + s + "'");
  return v;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(item);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

inline std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split(s, ',')) out.push_back(parse_number(item));
  return out;
}

/// Rows separated by ';', entries by ','.
inline std::vector<std::vector<double>> parse_rows(const std::string& s) {
  std::vector<std::vector<double>> out;
  for (const auto& row : split(s, ';')) out.push_back(parse_list(row));
  return out;
}

}  // namespace detail

inline const std::vector<std::string>& fixture_names() {
  static const std::vector<std::string> names{"relay", "two_tank", "pogromsky", "scalar_relay"};
  return names;
}

/// Built-in systems. relay accepts A, b, c (A rows ';'-separated); two_tank
/// accepts u.
inline BimodalSystem fixture(const std::string& name, const FixtureParams& params = {}) {
  auto reject_unknown = [&](std::initializer_list<const char*> allowed) {
    for (const auto& [key, _] : params.values) {
      bool ok = false;
      for (const char* a : allowed) ok = ok || key == a;
      if (!ok) throw Error(ErrorKind::MalformedInput, "fixture '" + name + "' has no parameter '" + key + "'");
    }
  };

  if (name == "relay") {
    reject_unknown({"A", "b", "c"});
    RawSystem r;
    r.A1 = params.has("A") ? detail::parse_rows(params.values.at("A"))
                           : std::vector<std::vector<double>>{{0.0, 1.0}, {0.0, 0.0}};
    r.A2 = r.A1;
    r.n = static_cast<long>(r.A1.size());
    r.e1 = params.has("b") ? detail::parse_list(params.values.at("b")) : std::vector<double>{0.0, 1.0};
    r.e2 = r.e1;
    for (double& v : r.e2) v = -v;
    r.c = params.has("c") ? detail::parse_list(params.values.at("c")) : std::vector<double>{1.0, 1.0};
    r.f = 0.0;
    return validate(r);
  }
  if (name == "two_tank") {
    reject_unknown({"u"});
    const double u = params.has("u") ? detail::parse_number(params.values.at("u")) : 0.5;
    RawSystem r;
    r.n = 2;
    r.A1 = {{-1.0, 0.0}, {1.0, -1.0}};
    r.A2 = r.A1;
    r.e1 = {u, 0.0};
    r.e2 = {0.0, 0.0};
    r.c = {0.0, 1.0};
    r.f = -1.0;  // surface x2 - 1 = 0; valve open (mode 1) below it
    return validate(r);
  }
  if (name == "pogromsky") {
    reject_unknown({});
    RawSystem r;
    r.n = 3;
    r.A1 = {{0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}, {0.0, 0.0, 0.0}};
    r.A2 = r.A1;
    r.e1 = {0.0, 0.0, 1.0};
    r.e2 = {0.0, 0.0, -1.0};
    r.c = {1.0, 0.0, 0.0};
    r.f = 0.0;
    return validate(r);
  }
  if (name == "scalar_relay") {
    reject_unknown({});
    RawSystem r;
    r.n = 1;
    r.A1 = {{0.0}};
    r.A2 = {{0.0}};
    r.e1 = {1.0};
    r.e2 = {-1.0};
    r.c = {1.0};
    r.f = 0.0;
    return validate(r);
  }
  throw Error(ErrorKind::UnknownFixture, "unknown fixture '" + name + "'");
}

/// Parses "name" or "name?key=value&key=value".
inline BimodalSystem fixture_from_uri(const std::string& uri) {
  const auto q = uri.find('?');
  const std::string name = uri.substr(0, q);
  FixtureParams params;
  if (q != std::string::npos) {
    for (const auto& kv : detail::split(uri.substr(q + 1), '&')) {
      if (kv.empty()) continue;
      const auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw Error(ErrorKind::MalformedInput, "fixture parameter '" + kv + "' lacks '='");
      params.values[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
  }
  return fixture(name, params);
}

}  // namespace filippov
