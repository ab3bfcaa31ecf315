#include "srd/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace srd {

namespace {

Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success) throw std::runtime_error(std::string(what) + ": eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -1e-8)
      throw std::invalid_argument(std::string(what) + ": matrix is indefinite (eigenvalue " + std::to_string(ev(i)) + ")");
    ev(i) = std::sqrt(std::max(ev(i), 0.0));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

double trace_sqrt_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const Eigen::MatrixXd ra = sqrt_psd(a, "frechet_distance");
  Eigen::MatrixXd s = ra * b * ra;
  s = 0.5 * (s + s.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s, Eigen::EigenvaluesOnly);
  double tr = 0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const double v = es.eigenvalues()(i);
    if (v < -1e-8) throw std::invalid_argument("frechet_distance: covariance product is indefinite");
    tr += std::sqrt(std::max(v, 0.0));
  }
  return tr;
}

void check_cov(const Eigen::MatrixXd& c, Eigen::Index d) {
  if (c.rows() != d || c.cols() != d) throw std::invalid_argument("frechet_distance: dimension mismatch");
  const double tol = 1e-9 * std::max(1.0, c.cwiseAbs().maxCoeff());
  if ((c - c.transpose()).cwiseAbs().maxCoeff() > tol)
    throw std::invalid_argument("frechet_distance: covariance is not symmetric");
}

void plane_layout(const nn::Tensor<float>& a, int& planes, int& h, int& w) {
  if (a.rank() == 3) {
    planes = a.dim(0);
    h = a.dim(1);
    w = a.dim(2);
  } else if (a.rank() == 4) {
    planes = a.dim(0) * a.dim(1);
    h = a.dim(2);
    w = a.dim(3);
  } else {
    throw std::invalid_argument("expected [C,H,W] or [B,C,H,W], got " + nn::shape_string(a.shape()));
  }
}

}  // namespace

GaussianStats feature_stats(const FeatureRows& rows) {
  if (rows.size() < 2) throw std::invalid_argument("feature statistics need at least 2 samples");
  const auto d = static_cast<Eigen::Index>(rows[0].size());
  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<Eigen::Index>(rows[i].size()) != d) throw std::invalid_argument("feature rows differ in length");
    for (Eigen::Index j = 0; j < d; ++j) X(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  }
  GaussianStats s;
  s.mean = X.colwise().mean().transpose();
  const Eigen::MatrixXd C = X.rowwise() - s.mean.transpose();
  s.cov = (C.transpose() * C) / static_cast<double>(X.rows() - 1);
  s.cov = 0.5 * (s.cov + s.cov.transpose());
  return s;
}

double frechet_distance(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& cov1, const Eigen::VectorXd& mu2,
                        const Eigen::MatrixXd& cov2) {
  const Eigen::Index d = mu1.size();
  if (mu2.size() != d) throw std::invalid_argument("frechet_distance: mean dimension mismatch");
  check_cov(cov1, d);
  check_cov(cov2, d);
  const double mean_term = (mu1 - mu2).squaredNorm();
  const double tr = cov1.trace() + cov2.trace();
  const double cross = 0.5 * (trace_sqrt_product(cov1, cov2) + trace_sqrt_product(cov2, cov1));
  return std::max(0.0, mean_term + tr - 2.0 * cross);
}

Embedder highlighter_embedder(const HighlighterModel& model) {
  return [&model](const nn::Tensor<float>& images) { return model.embed(images); };
}

PixelPcaEmbedder::PixelPcaEmbedder(const nn::Tensor<float>& reference, int components) {
  if (reference.rank() != 4 || reference.dim(0) < 2) throw std::invalid_argument("PCA embedder needs >= 2 reference images");
  const Eigen::Index n = reference.dim(0), D = static_cast<Eigen::Index>(reference.size()) / n;
  Eigen::MatrixXd X(n, D);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < D; ++j) X(i, j) = reference[static_cast<std::size_t>(i * D + j)];
  mean_ = X.colwise().mean().transpose();
  X.rowwise() -= mean_.transpose();
  const Eigen::MatrixXd cov = X.transpose() * X / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const Eigen::Index k = std::clamp<Eigen::Index>(components, 2, D);
  // Eigenvalues ascend; keep the last k columns, largest first.
  basis_ = es.eigenvectors().rightCols(k).rowwise().reverse();
}

FeatureRows PixelPcaEmbedder::operator()(const nn::Tensor<float>& images) const {
  const Eigen::Index n = images.dim(0), D = static_cast<Eigen::Index>(images.size()) / n;
  if (D != mean_.size()) throw std::invalid_argument("PCA embedder: image size differs from the reference set");
  FeatureRows rows(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd x(D);
    for (Eigen::Index j = 0; j < D; ++j) x(j) = images[static_cast<std::size_t>(i * D + j)];
    const Eigen::VectorXd p = basis_.transpose() * (x - mean_);
    rows[static_cast<std::size_t>(i)].assign(p.data(), p.data() + p.size());
  }
  return rows;
}

double desk_fid(const nn::Tensor<float>& real, const nn::Tensor<float>& generated, const Embedder& embedder) {
  if (real.rank() != 4 || generated.rank() != 4 || real.dim(0) < 2 || generated.dim(0) < 2)
    throw std::invalid_argument("desk_fid: need at least 2 images on each side");
  const FeatureRows fr = embedder(real), fg = embedder(generated);
  if (fr.empty() || fr[0].size() < 2) throw std::invalid_argument("desk_fid: embedder dimension must be >= 2");
  const GaussianStats a = feature_stats(fr), b = feature_stats(fg);
  return frechet_distance(a.mean, a.cov, b.mean, b.cov);
}

double psnr(const nn::Tensor<float>& a, const nn::Tensor<float>& b, double data_range) {
  if (a.shape() != b.shape()) throw std::invalid_argument("psnr: shape mismatch");
  if (!(data_range > 0)) throw std::invalid_argument("psnr: data_range must be positive");
  if (a.size() == 0) throw std::invalid_argument("psnr: empty input");
  double se = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    se += d * d;
  }
  if (se == 0) return kPsnrIdentical;
  return 10.0 * std::log10(data_range * data_range / (se / static_cast<double>(a.size())));
}

double ssim(const nn::Tensor<float>& a, const nn::Tensor<float>& b, double data_range) {
  if (a.shape() != b.shape()) throw std::invalid_argument("ssim: shape mismatch");
  if (!(data_range > 0)) throw std::invalid_argument("ssim: data_range must be positive");
  int planes = 0, h = 0, w = 0;
  plane_layout(a, planes, h, w);
  constexpr int kWin = 11;
  if (h < kWin || w < kWin) throw std::invalid_argument("ssim: images must be at least 11x11");
  double win[kWin][kWin], total = 0;
  for (int i = 0; i < kWin; ++i)
    for (int j = 0; j < kWin; ++j) total += win[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
  for (auto& row : win)
    for (double& v : row) v /= total;
  const double c1 = (0.01 * data_range) * (0.01 * data_range), c2 = (0.03 * data_range) * (0.03 * data_range);
  double acc = 0;
  long count = 0;
  for (int p = 0; p < planes; ++p) {
    const float* x = a.data() + static_cast<std::size_t>(p) * h * w;
    const float* y = b.data() + static_cast<std::size_t>(p) * h * w;
    for (int i = 0; i + kWin <= h; ++i)
      for (int j = 0; j + kWin <= w; ++j) {
        double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
        for (int u = 0; u < kWin; ++u)
          for (int v = 0; v < kWin; ++v) {
            const double g = win[u][v];
            const double xv = x[(i + u) * w + j + v], yv = y[(i + u) * w + j + v];
            mx += g * xv;
            my += g * yv;
            xx += g * xv * xv;
            yy += g * yv * yv;
            xy += g * xv * yv;
          }
        const double vx = xx - mx * mx, vy = yy - my * my, cxy = xy - mx * my;
        acc += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++count;
      }
  }
  return acc / static_cast<double>(count);
}

double perceptual_distance(const nn::Tensor<float>& a, const nn::Tensor<float>& b, const HighlighterModel& model) {
  if (!model.trained()) throw std::logic_error("perceptual_distance: highlighter is untrained");
  if (a.shape() != b.shape()) throw std::invalid_argument("perceptual_distance: shape mismatch");
  const auto fa = model.stage_features(a), fb = model.stage_features(b);
  double total = 0;
  for (std::size_t s = 0; s < fa.size(); ++s) {
    const int B = fa[s].dim(0), C = fa[s].dim(1);
    const std::size_t hw = static_cast<std::size_t>(fa[s].dim(2)) * fa[s].dim(3);
    double stage = 0;
    for (int n = 0; n < B; ++n)
      for (std::size_t k = 0; k < hw; ++k) {
        double na = 0, nb = 0;
        for (int c = 0; c < C; ++c) {
          const std::size_t idx = (static_cast<std::size_t>(n) * C + c) * hw + k;
          na += static_cast<double>(fa[s][idx]) * fa[s][idx];
          nb += static_cast<double>(fb[s][idx]) * fb[s][idx];
        }
        na = std::sqrt(na) + 1e-10;
        nb = std::sqrt(nb) + 1e-10;
        for (int c = 0; c < C; ++c) {
          const std::size_t idx = (static_cast<std::size_t>(n) * C + c) * hw + k;
          const double d = fa[s][idx] / na - fb[s][idx] / nb;
          stage += d * d;
        }
      }
    total += stage / (static_cast<double>(B) * static_cast<double>(hw));
  }
  return total / static_cast<double>(fa.size());
}

std::string format_metric_value(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "metric,split,value,seed\n";
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  };
  for (const auto& r : rows) out << quote(r.metric) << "," << quote(r.split) << "," << format_metric_value(r.value) << "," << r.seed << "\n";
}

void write_metrics_jsonl(const std::filesystem::path& path, const std::vector<MetricRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["metric"] = r.metric;
    j["split"] = r.split;
    if (std::isfinite(r.value)) j["value"] = r.value;
    else j["value"] = format_metric_value(r.value);
    j["seed"] = r.seed;
    out << j.dump() << "\n";
  }
}

}  // namespace srd
