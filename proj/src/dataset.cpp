#include "marginlab/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "marginlab/rng.hpp"
#include "marginlab/version.hpp"

// Local JSON use is limited to the dataset sidecar.
#include "json.hpp"

namespace marginlab {

namespace {

std::string format17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_atomic(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

Dataset::Dataset(Eigen::MatrixXd points, DatasetProvenance provenance)
    : points_(std::move(points)), provenance_(std::move(provenance)) {
  if (points_.cols() < 1 || points_.rows() < 1) {
    throw std::invalid_argument("dataset needs at least one point and one dimension");
  }
  if (!points_.allFinite()) {
    throw std::invalid_argument("dataset contains non-finite coordinates");
  }
}

double Dataset::sigma_max() const {
  if (sigma_cache_ < 0.0) sigma_cache_ = spectral_norm(points_);
  return sigma_cache_;
}

bool Dataset::sigma_max_degenerate() const { return points_.isZero(0.0); }

double spectral_norm(const Eigen::MatrixXd& points) {
  if (points.isZero(0.0)) return 0.0;
  // Power iteration on the smaller Gram matrix; the dominant eigenvalue of
  // either Gram side is sigma_max^2.
  const bool use_rows = points.rows() <= points.cols();
  const Eigen::MatrixXd gram = use_rows ? Eigen::MatrixXd(points * points.transpose())
                                        : Eigen::MatrixXd(points.transpose() * points);
  const Eigen::Index k = gram.rows();
  // Deterministic start with unequal entries so no eigenvector is orthogonal
  // to it by symmetry.
  Eigen::VectorXd v(k);
  for (Eigen::Index i = 0; i < k; ++i) v[i] = 1.0 + 1e-3 * static_cast<double>(i);
  v.normalize();
  double lambda = 0.0;
  for (long iter = 0; iter < 10'000'000; ++iter) {
    Eigen::VectorXd gv = gram * v;
    const double norm = gv.norm();
    if (norm == 0.0) return 0.0;  // start vector annihilated: restart shifted
    v = gv / norm;
    gv = gram * v;
    lambda = v.dot(gv);
    if ((gv - lambda * v).norm() <= 1e-12 * lambda) break;
  }
  return std::sqrt(lambda);
}

Dataset fold_labels(const std::vector<Eigen::VectorXd>& features, const std::vector<int>& labels) {
  if (features.size() != labels.size()) {
    throw std::invalid_argument("fold_labels: feature/label length mismatch");
  }
  if (features.empty()) throw std::invalid_argument("fold_labels: empty dataset");
  const Eigen::Index d = features.front().size();
  Eigen::MatrixXd pts(d, static_cast<Eigen::Index>(features.size()));
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (labels[i] != 1 && labels[i] != -1) {
      throw std::invalid_argument("fold_labels: labels must be +1 or -1");
    }
    if (features[i].size() != d) {
      throw std::invalid_argument("fold_labels: inconsistent feature dimensions");
    }
    pts.col(static_cast<Eigen::Index>(i)) = static_cast<double>(labels[i]) * features[i];
  }
  return Dataset(std::move(pts), DatasetProvenance{"inline", 0, {}});
}

Dataset make_soudry_dataset(std::uint64_t seed, int n_extra) {
  if (n_extra < 0) throw std::invalid_argument("make_soudry_dataset: n_extra must be >= 0");
  const Eigen::Vector2d support_a(1.5, 0.5), support_b(0.5, 1.5);
  Eigen::MatrixXd pts(2, 4 + n_extra);
  pts.col(0) = support_a;
  pts.col(1) = support_b;
  pts.col(2) = support_a;
  pts.col(3) = support_b;
  // Extra points keep margin >= 1.1 against the known max-margin direction
  // (0.5, 0.5): direction theta in [-pi/8, 5pi/8] keeps <(0.5,0.5), u> well
  // away from zero, then the radius is at least 1.1 / <(0.5,0.5), u>.
  SplitMix64 rng = SplitMix64(seed).split(0);
  const double lo = -std::numbers::pi / 8.0, hi = 5.0 * std::numbers::pi / 8.0;
  for (int j = 0; j < n_extra; ++j) {
    const double theta = lo + (hi - lo) * rng.next_double();
    const Eigen::Vector2d u(std::cos(theta), std::sin(theta));
    const double ip = 0.5 * (u.x() + u.y());
    const double radius = (1.1 / ip) * (1.0 + rng.next_double());
    pts.col(4 + j) = radius * u;
  }
  DatasetProvenance prov{"soudry", seed, {{"n_extra", static_cast<double>(n_extra)}}};
  return Dataset(std::move(pts), std::move(prov));
}

Dataset make_illposed_dataset(std::uint64_t seed, double scale) {
  if (scale < 10.0) throw std::invalid_argument("make_illposed_dataset: scale must be >= 10");
  constexpr int kOffSupport = 8;
  Eigen::MatrixXd pts(2, 2 + kOffSupport);
  pts.col(0) = Eigen::Vector2d(1.5, 0.5);
  pts.col(1) = Eigen::Vector2d(0.5, 1.5);
  SplitMix64 rng = SplitMix64(seed).split(1);
  for (int j = 0; j < kOffSupport; ++j) {
    const double x0 = 0.5 + rng.next_double();                 // [0.5, 1.5)
    const double x1 = scale * (1.0 + 2.0 * rng.next_double()); // [scale, 3*scale)
    pts.col(2 + j) = Eigen::Vector2d(x0, x1);
  }
  DatasetProvenance prov{"illposed", seed, {{"scale", scale}}};
  return Dataset(std::move(pts), std::move(prov));
}

SeparabilityWitness check_separable(const Dataset& ds) {
  const Eigen::MatrixXd& pts = ds.points();
  const int n = ds.n();
  const double r2 = pts.colwise().squaredNorm().maxCoeff();
  // Perceptron: mistake count on separable data is bounded by (R/gamma)^2;
  // the cap trades that unknown gamma for a documented data-scaled budget.
  const long cap = 1000L * n * static_cast<long>(std::max(1.0, std::ceil(r2)));
  Eigen::VectorXd w = Eigen::VectorXd::Zero(ds.d());
  long mistakes = 0;
  while (mistakes <= cap) {
    bool clean = true;
    for (int i = 0; i < n; ++i) {
      if (w.dot(pts.col(i)) <= 0.0) {
        w += pts.col(i);
        ++mistakes;
        clean = false;
      }
    }
    if (clean) return {true, w};
    if (mistakes > cap) break;
  }
  // Frank-Wolfe minimum-norm point over the convex hull, exact line search.
  // Outcomes: a hull point p with min_i <p, x_i> > 0 is itself a separator;
  // ||p|| <= 1e-9 certifies that zero lies in the hull, so no separator
  // exists.
  Eigen::VectorXd p = pts.col(0);
  constexpr double kHullTol = 1e-9;
  for (long iter = 0; iter < 5'000'000; ++iter) {
    if (p.norm() <= kHullTol) return {false, std::nullopt};
    int best = 0;
    double best_ip = p.dot(pts.col(0));
    for (int i = 1; i < n; ++i) {
      const double ip = p.dot(pts.col(i));
      if (ip < best_ip) {
        best_ip = ip;
        best = i;
      }
    }
    if (best_ip > 0.0) return {true, p};
    const Eigen::VectorXd dir = pts.col(best) - p;
    const double denom = dir.squaredNorm();
    if (denom == 0.0) return {false, std::nullopt};  // p is the vertex nearest zero
    const double step = std::clamp(-p.dot(dir) / denom, 0.0, 1.0);
    if (step == 0.0) {
      // Stationary with min_i <p, x_i> <= 0: boundary case, zero in the hull
      // within numerical resolution.
      return {false, std::nullopt};
    }
    p += step * dir;
  }
  throw std::runtime_error("check_separable: minimum-norm-point iteration budget exhausted");
}

void save_dataset(const Dataset& ds, const std::filesystem::path& csv_path,
                  std::optional<std::filesystem::path> sidecar_path) {
  std::ostringstream csv;
  for (int j = 0; j < ds.d(); ++j) csv << (j ? "," : "") << "x" << j;
  csv << "\n";
  for (int i = 0; i < ds.n(); ++i) {
    for (int j = 0; j < ds.d(); ++j) {
      csv << (j ? "," : "") << format17(ds.points()(j, i));
    }
    csv << "\n";
  }
  write_atomic(csv_path, csv.str());
  nlohmann::json meta;
  meta["schema"] = kSchemaVersion;
  meta["n"] = ds.n();
  meta["d"] = ds.d();
  meta["generator"] = ds.provenance().generator;
  meta["seed"] = ds.provenance().seed;
  meta["params"] = ds.provenance().params;
  const std::filesystem::path side =
      sidecar_path ? *sidecar_path : std::filesystem::path(csv_path.string() + ".json");
  write_atomic(side, meta.dump(2) + "\n");
}

Dataset load_dataset(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw std::invalid_argument("cannot read dataset " + csv_path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("empty dataset file");
  int d = 1;
  for (char c : line) d += (c == ',');
  std::vector<double> values;
  int n = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    int cols = 0;
    const char* ptr = line.data();
    const char* end = ptr + line.size();
    while (ptr < end) {
      double v = 0.0;
      auto [next, ec] = std::from_chars(ptr, end, v);
      if (ec != std::errc()) {
        throw std::invalid_argument("bad number in dataset row " + std::to_string(n + 1));
      }
      values.push_back(v);
      ++cols;
      ptr = (next < end && *next == ',') ? next + 1 : next;
    }
    if (cols != d) throw std::invalid_argument("ragged dataset row " + std::to_string(n + 1));
    ++n;
  }
  if (n == 0) throw std::invalid_argument("dataset has no points");
  Eigen::MatrixXd pts(d, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) pts(j, i) = values[static_cast<std::size_t>(i) * d + j];

  DatasetProvenance prov{"file", 0, {}};
  const std::filesystem::path side(csv_path.string() + ".json");
  if (std::filesystem::exists(side)) {
    std::ifstream meta_in(side);
    nlohmann::json meta = nlohmann::json::parse(meta_in, nullptr, /*allow_exceptions=*/false);
    if (!meta.is_discarded()) {
      prov.generator = meta.value("generator", "file");
      prov.seed = meta.value("seed", std::uint64_t{0});
      if (meta.contains("params") && meta["params"].is_object()) {
        for (auto& [k, v] : meta["params"].items()) {
          if (v.is_number()) prov.params[k] = v.get<double>();
        }
      }
    }
  }
  return Dataset(std::move(pts), std::move(prov));
}

}  // namespace marginlab
