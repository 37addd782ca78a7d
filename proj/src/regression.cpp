#include "lift3d/regression.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "lift3d/errors.hpp"
#include "lift3d/geometry.hpp"

namespace lift3d {

using nlohmann::json;

std::string to_string(Penalty p) {
  switch (p) {
    case Penalty::Ridge: return "ridge";
    case Penalty::Lasso: return "lasso";
    case Penalty::ElasticNet: return "elastic-net";
  }
  return "ridge";
}

Penalty penalty_from_string(const std::string& s) {
  if (s == "ridge") return Penalty::Ridge;
  if (s == "lasso") return Penalty::Lasso;
  if (s == "elastic-net" || s == "elasticnet") return Penalty::ElasticNet;
  throw SchemaError("unknown penalty '" + s + "'");
}

std::string to_string(UnwrapMode m) {
  return m == UnwrapMode::Raw ? "raw" : "recenter";
}

UnwrapMode unwrap_mode_from_string(const std::string& s) {
  if (s == "raw") return UnwrapMode::Raw;
  if (s == "recenter") return UnwrapMode::Recenter;
  throw SchemaError("unknown unwrap mode '" + s + "'");
}

namespace {

double circular_mean_deg(const Eigen::VectorXd& deg) {
  double s = 0.0, c = 0.0;
  for (int i = 0; i < deg.size(); ++i) {
    s += std::sin(deg2rad(deg[i]));
    c += std::cos(deg2rad(deg[i]));
  }
  return normalize_angle(rad2deg(std::atan2(s, c)));
}

// Cyclic coordinate descent for
//   ||y - Z w||^2 + l1 ||w||_1 + (l2 / 2) ||w||^2
// (callers pass l1 = lambda * a, l2 = lambda * (1 - a)).
Eigen::VectorXd coordinate_descent(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y, double l1,
                                   double l2, double tol, int max_sweeps) {
  const int d = static_cast<int>(Z.cols());
  Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd residual = y;  // y - Z w
  Eigen::VectorXd col_sq(d);
  for (int j = 0; j < d; ++j) col_sq[j] = Z.col(j).squaredNorm();

  auto soft = [](double z, double g) {
    if (z > g) return z - g;
    if (z < -g) return z + g;
    return 0.0;
  };

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    for (int j = 0; j < d; ++j) {
      if (col_sq[j] <= 0.0) { w[j] = 0.0; continue; }
      const double rho = 2.0 * (Z.col(j).dot(residual) + col_sq[j] * w[j]);
      const double w_new = soft(rho, l1) / (2.0 * col_sq[j] + l2);
      if (w_new != w[j]) {
        residual += Z.col(j) * (w[j] - w_new);
        w[j] = w_new;
      }
    }
    // KKT violation of the full objective; gradient of the smooth part is
    // -2 Z^T (y - Zw) + l2 w.
    double worst = 0.0;
    const Eigen::VectorXd grad = -2.0 * (Z.transpose() * residual) + l2 * w;
    for (int j = 0; j < d; ++j) {
      double v = w[j] == 0.0 ? std::max(0.0, std::fabs(grad[j]) - l1)
                             : std::fabs(grad[j] + l1 * (w[j] > 0.0 ? 1.0 : -1.0));
      worst = std::max(worst, v);
    }
    if (worst <= tol) return w;
  }
  throw NonConvergence("coordinate descent did not reach tolerance");
}

}  // namespace

Regressor train(const Eigen::MatrixXd& phi, const Eigen::VectorXd& targets_deg, Penalty penalty,
                double lambda, double l1_ratio, const TrainOptions& options,
                const std::string& class_label) {
  const int n = static_cast<int>(phi.rows());
  const int d = static_cast<int>(phi.cols());
  if (n == 0 || d == 0) throw DimensionMismatch("empty training set");
  if (targets_deg.size() != n) throw DimensionMismatch("feature/target row count mismatch");
  if (lambda < 0.0) throw SchemaError("lambda must be >= 0");
  if (l1_ratio < 0.0 || l1_ratio > 1.0) throw SchemaError("l1_ratio must be in [0, 1]");

  Regressor reg;
  reg.penalty = penalty;
  reg.lambda = lambda;
  reg.l1_ratio = penalty == Penalty::Lasso ? 1.0 : (penalty == Penalty::Ridge ? 0.0 : l1_ratio);
  reg.dim = d;
  reg.class_label = class_label;

  // Raw mode regresses the target degrees untouched; the 0/360 seam is the
  // caller's to manage. Recenter shifts by the circular mean, which also
  // canonicalizes out-of-range inputs.
  Eigen::VectorXd y = targets_deg;
  if (options.unwrap == UnwrapMode::Recenter) {
    reg.target_offset = circular_mean_deg(y);
    for (int i = 0; i < n; ++i) y[i] = normalize_angle_signed(y[i] - reg.target_offset);
  }

  if (options.standardize) {
    reg.feat_mean = phi.colwise().mean();
    Eigen::VectorXd var =
        (phi.rowwise() - reg.feat_mean.transpose()).array().square().colwise().mean();
    reg.feat_std = var.array().sqrt();
    for (int j = 0; j < d; ++j)
      if (reg.feat_std[j] < 1e-12) reg.feat_std[j] = 1.0;  // constant column
  } else {
    reg.feat_mean = Eigen::VectorXd::Zero(d);
    reg.feat_std = Eigen::VectorXd::Ones(d);
  }

  Eigen::MatrixXd Z =
      (phi.rowwise() - reg.feat_mean.transpose()).array().rowwise() /
      reg.feat_std.transpose().array();

  Eigen::VectorXd z_mean = Eigen::VectorXd::Zero(d);
  double y_mean = 0.0;
  if (options.intercept) {
    z_mean = Z.colwise().mean();
    Z.rowwise() -= z_mean.transpose();
    y_mean = y.mean();
    y.array() -= y_mean;
  }

  if (penalty == Penalty::Ridge) {
    if (lambda == 0.0) {
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Z);
      if (qr.rank() < d)
        throw SingularSystem("ridge with lambda = 0 on a rank-deficient design");
    }
    Eigen::MatrixXd normal = Z.transpose() * Z;
    normal.diagonal().array() += lambda;
    reg.weights = normal.ldlt().solve(Z.transpose() * y);
  } else {
    const double a = penalty == Penalty::Lasso ? 1.0 : l1_ratio;
    reg.weights =
        coordinate_descent(Z, y, lambda * a, lambda * (1.0 - a), options.tol, options.max_sweeps);
  }

  reg.intercept = options.intercept ? y_mean - z_mean.dot(reg.weights) : 0.0;
  return reg;
}

double predict(const Regressor& reg, const Eigen::VectorXd& phi) {
  if (phi.size() != reg.dim)
    throw DimensionMismatch("feature vector has dim " + std::to_string(phi.size()) +
                            ", model expects " + std::to_string(reg.dim));
  const Eigen::VectorXd z = (phi - reg.feat_mean).cwiseQuotient(reg.feat_std);
  return normalize_angle(z.dot(reg.weights) + reg.intercept + reg.target_offset);
}

void save_regressor(const Regressor& reg, const std::filesystem::path& path,
                    const json& run_config) {
  json j;
  j["format"] = "lift3d/regressor/1";
  j["config"] = run_config.is_null() ? json::object() : run_config;
  j["penalty"] = to_string(reg.penalty);
  j["lambda"] = reg.lambda;
  j["l1_ratio"] = reg.l1_ratio;
  j["dim"] = reg.dim;
  j["weights"] = std::vector<double>(reg.weights.data(), reg.weights.data() + reg.weights.size());
  j["intercept"] = reg.intercept;
  j["standardization"] = {
      {"mean", std::vector<double>(reg.feat_mean.data(), reg.feat_mean.data() + reg.feat_mean.size())},
      {"std", std::vector<double>(reg.feat_std.data(), reg.feat_std.data() + reg.feat_std.size())}};
  j["target_offset"] = reg.target_offset;
  j["class"] = reg.class_label;
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open for writing: " + path.string());
  out << j.dump(2) << "\n";
}

Regressor load_regressor(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in || std::filesystem::is_directory(path)) throw ParseError("cannot open: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  Regressor reg;
  try {
    reg.penalty = penalty_from_string(j.at("penalty").get<std::string>());
    reg.lambda = j.at("lambda").get<double>();
    reg.l1_ratio = j.at("l1_ratio").get<double>();
    reg.dim = j.at("dim").get<int>();
    auto w = j.at("weights").get<std::vector<double>>();
    auto mean = j.at("standardization").at("mean").get<std::vector<double>>();
    auto stdv = j.at("standardization").at("std").get<std::vector<double>>();
    if (static_cast<int>(w.size()) != reg.dim || static_cast<int>(mean.size()) != reg.dim ||
        static_cast<int>(stdv.size()) != reg.dim)
      throw SchemaError(path.string() + ": weight/standardization size disagrees with dim");
    reg.weights = Eigen::Map<Eigen::VectorXd>(w.data(), w.size());
    reg.feat_mean = Eigen::Map<Eigen::VectorXd>(mean.data(), mean.size());
    reg.feat_std = Eigen::Map<Eigen::VectorXd>(stdv.data(), stdv.size());
    reg.intercept = j.at("intercept").get<double>();
    reg.target_offset = j.value("target_offset", 0.0);
    reg.class_label = j.value("class", std::string{});
  } catch (const json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  return reg;
}

namespace {
constexpr char kFeatureMagic[8] = {'L', 'F', 'T', '3', 'F', 'E', 'A', 'T'};

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}
}  // namespace

void save_features(const FeatureFile& f, const std::filesystem::path& bin_path,
                   const std::filesystem::path& index_path) {
  if (f.features.rows() != static_cast<Eigen::Index>(f.rows.size()))
    throw DimensionMismatch("feature matrix rows disagree with index rows");
  std::ofstream out(bin_path, std::ios::binary);
  if (!out) throw ParseError("cannot open for writing: " + bin_path.string());
  out.write(kFeatureMagic, 8);
  write_u32(out, static_cast<std::uint32_t>(f.features.rows()));
  write_u32(out, static_cast<std::uint32_t>(f.features.cols()));
  for (Eigen::Index i = 0; i < f.features.rows(); ++i)
    for (Eigen::Index j = 0; j < f.features.cols(); ++j) {
      const float v = static_cast<float>(f.features(i, j));
      out.write(reinterpret_cast<const char*>(&v), 4);
    }

  json idx;
  idx["format"] = "lift3d/features/1";
  json rows = json::array();
  for (const auto& row : f.rows) {
    json r = {{"image_id", row.image_id}, {"detection_id", row.detection_id}};
    if (row.azimuth) r["azimuth"] = *row.azimuth;
    else r["azimuth"] = nullptr;
    if (!row.class_label.empty()) r["class"] = row.class_label;
    rows.push_back(std::move(r));
  }
  idx["rows"] = std::move(rows);
  std::ofstream iout(index_path);
  if (!iout) throw ParseError("cannot open for writing: " + index_path.string());
  iout << idx.dump(2) << "\n";
}

FeatureFile load_features(const std::filesystem::path& bin_path,
                          const std::filesystem::path& index_path) {
  std::ifstream in(bin_path, std::ios::binary);
  if (!in || std::filesystem::is_directory(bin_path))
    throw ParseError("cannot open: " + bin_path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kFeatureMagic, 8) != 0)
    throw ParseError(bin_path.string() + ": bad feature file magic");
  const std::uint32_t n = read_u32(in);
  const std::uint32_t d = read_u32(in);
  if (!in) throw ParseError(bin_path.string() + ": truncated header");
  FeatureFile f;
  f.features.resize(n, d);
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = 0; j < d; ++j) {
      float v;
      in.read(reinterpret_cast<char*>(&v), 4);
      if (!in) throw ParseError(bin_path.string() + ": truncated feature data");
      f.features(i, j) = v;
    }

  std::ifstream iin(index_path);
  if (!iin || std::filesystem::is_directory(index_path))
    throw ParseError("cannot open: " + index_path.string());
  json idx;
  try {
    iin >> idx;
  } catch (const json::exception& e) {
    throw ParseError(index_path.string() + ": " + e.what());
  }
  if (!idx.contains("rows") || !idx["rows"].is_array())
    throw SchemaError(index_path.string() + ": missing 'rows' list");
  for (const json& r : idx["rows"]) {
    FeatureRow row;
    row.image_id = r.at("image_id").get<std::string>();
    row.detection_id = r.value("detection_id", std::string{});
    if (r.contains("azimuth") && !r["azimuth"].is_null())
      row.azimuth = r["azimuth"].get<double>();
    row.class_label = r.value("class", std::string{});
    f.rows.push_back(std::move(row));
  }
  if (f.features.rows() != static_cast<Eigen::Index>(f.rows.size()))
    throw SchemaError(index_path.string() + ": index row count disagrees with binary matrix");
  return f;
}

double circular_mae(const Regressor& reg, const Eigen::MatrixXd& phi,
                    const Eigen::VectorXd& targets_deg) {
  if (phi.rows() == 0) return 0.0;
  double total = 0.0;
  for (Eigen::Index i = 0; i < phi.rows(); ++i)
    total += azimuth_error(predict(reg, phi.row(i)), targets_deg[i]);
  return total / static_cast<double>(phi.rows());
}

double select_lambda_kfold(const Eigen::MatrixXd& phi, const Eigen::VectorXd& targets_deg,
                           Penalty penalty, const std::vector<double>& lambda_grid,
                           double l1_ratio, int folds, const TrainOptions& options) {
  if (lambda_grid.empty()) throw SchemaError("empty lambda grid");
  const int n = static_cast<int>(phi.rows());
  folds = std::max(2, std::min(folds, n));

  double best_lambda = lambda_grid.front();
  double best_err = std::numeric_limits<double>::infinity();
  for (double lambda : lambda_grid) {
    double err_sum = 0.0;
    int fold_count = 0;
    for (int k = 0; k < folds; ++k) {
      const int lo = static_cast<int>(static_cast<std::int64_t>(n) * k / folds);
      const int hi = static_cast<int>(static_cast<std::int64_t>(n) * (k + 1) / folds);
      if (hi <= lo) continue;
      const int held = hi - lo;
      Eigen::MatrixXd train_phi(n - held, phi.cols());
      Eigen::VectorXd train_y(n - held);
      train_phi.topRows(lo) = phi.topRows(lo);
      train_phi.bottomRows(n - hi) = phi.bottomRows(n - hi);
      train_y.head(lo) = targets_deg.head(lo);
      train_y.tail(n - hi) = targets_deg.tail(n - hi);
      if (train_phi.rows() == 0) continue;
      Regressor reg = train(train_phi, train_y, penalty, lambda, l1_ratio, options);
      err_sum += circular_mae(reg, phi.middleRows(lo, held), targets_deg.segment(lo, held));
      ++fold_count;
    }
    const double err = fold_count > 0 ? err_sum / fold_count : 0.0;
    if (err < best_err) {
      best_err = err;
      best_lambda = lambda;
    }
  }
  return best_lambda;
}

}  // namespace lift3d
