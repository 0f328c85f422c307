#pragma once

// Label-folded linear classification datasets and the generators used by the
// experiments. After folding (x_i <- y_i * x_i) a dataset is separable exactly
// when some w has <w, x_i> > 0 for all i, which is the only form the rest of
// the library ever needs.

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace marginlab {

struct DatasetProvenance {
  std::string generator;  // "soudry", "illposed", "file", "inline"
  std::uint64_t seed = 0;
  std::map<std::string, double> params;
};

class Dataset {
 public:
  // Columns of `points` are the folded points.
  explicit Dataset(Eigen::MatrixXd points, DatasetProvenance provenance = {});

  int n() const { return static_cast<int>(points_.cols()); }
  int d() const { return static_cast<int>(points_.rows()); }
  const Eigen::MatrixXd& points() const { return points_; }
  Eigen::VectorXd point(int i) const { return points_.col(i); }
  const DatasetProvenance& provenance() const { return provenance_; }

  // Largest singular value of the point matrix, power iteration to 1e-12
  // relative residual. Cached after the first call; the benign race on the
  // cache is harmless because every writer stores the same value.
  double sigma_max() const;
  // True when all points are zero (sigma_max degenerates to 0).
  bool sigma_max_degenerate() const;

 private:
  Eigen::MatrixXd points_;
  DatasetProvenance provenance_;
  mutable double sigma_cache_ = -1.0;  // -1 means "not yet computed"
};

// Folds labels into features: x_i <- y_i * x_i. Throws std::invalid_argument
// on length mismatch or labels outside {-1, +1}.
Dataset fold_labels(const std::vector<Eigen::VectorXd>& features, const std::vector<int>& labels);

// Four fixed support points (the folded pairs (1.5,0.5) and (0.5,1.5), each
// twice) plus n_extra seeded points with margin >= 1.1 against the direction
// (0.5, 0.5), so the support set stays the four fixed points.
Dataset make_soudry_dataset(std::uint64_t seed, int n_extra);

// The folded support pair plus eight points whose second coordinate lies in
// [scale, 3*scale]; large off-support coordinates make the early gradient
// direction nearly orthogonal to the max-margin direction.
// Throws std::invalid_argument for scale < 10.
Dataset make_illposed_dataset(std::uint64_t seed, double scale);

// Standalone spectral norm of an arbitrary point matrix (power iteration,
// 1e-12 relative residual); used by Dataset::sigma_max.
double spectral_norm(const Eigen::MatrixXd& points);

struct SeparabilityWitness {
  bool separable = false;
  // Present iff separable; satisfies min_i <witness_w, x_i> > 0.
  std::optional<Eigen::VectorXd> witness_w;
};

// Perceptron first (mistake cap 1000 * n * max(1, ceil(R^2)) with R the
// largest point norm), then a Frank-Wolfe minimum-norm-point solve over the
// convex hull. Separability is decided by whichever certificate appears
// first: a strict separator, or a hull point with norm <= 1e-9 (zero lies in
// the hull, so no separator exists).
SeparabilityWitness check_separable(const Dataset& ds);

// CSV with header x0,...,x{d-1}, one folded point per row, 17 significant
// digits (bit-exact round trip), plus a JSON sidecar with n, d and
// provenance. `csv_path` gets ".json" appended for the sidecar unless
// `sidecar_path` is given.
void save_dataset(const Dataset& ds, const std::filesystem::path& csv_path,
                  std::optional<std::filesystem::path> sidecar_path = std::nullopt);
Dataset load_dataset(const std::filesystem::path& csv_path);

}  // namespace marginlab
