#include "vidsal/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "json.hpp"

#include "vidsal/error.hpp"

namespace vidsal::metrics {
namespace {

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t i) {
  while (parent[i] != i) {
    parent[i] = parent[parent[i]];
    i = parent[i];
  }
  return i;
}

void unite(std::vector<std::size_t>& parent, std::size_t a, std::size_t b) {
  a = find_root(parent, a);
  b = find_root(parent, b);
  if (a == b) return;
  if (a < b) std::swap(a, b);
  parent[a] = b;  // smaller index is the root
}

std::string num(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string num(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

nlohmann::json to_json(const Aggregate& a) {
  nlohmann::json j;
  j["n"] = a.n;
  j["mean"] = a.mean ? nlohmann::json(*a.mean) : nlohmann::json(nullptr);
  j["std"] = a.stddev ? nlohmann::json(*a.stddev) : nlohmann::json(nullptr);
  return j;
}

nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

std::vector<double> values_of(std::span<const SequenceMetrics> seqs, std::string_view metric) {
  std::vector<double> out;
  for (const auto& s : seqs)
    if (auto v = sequence_value(s, metric)) out.push_back(*v);
  return out;
}

double sample_variance(std::span<const double> x, double mean) {
  double s = 0;
  for (double v : x) s += (v - mean) * (v - mean);
  return s / double(x.size() - 1);
}

}  // namespace

std::vector<Blob> detect_blobs(std::span<const double> map, std::size_t height, std::size_t width, double threshold,
                               std::size_t min_area) {
  if (map.size() != height * width) throw ShapeError("blobs: map size does not match height x width");
  const std::size_t n = map.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto on = [&](std::size_t y, std::size_t x) { return map[y * width + x] > threshold; };
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      if (!on(y, x)) continue;
      const std::size_t i = y * width + x;
      if (x > 0 && on(y, x - 1)) unite(parent, i, i - 1);
      if (y > 0) {
        if (on(y - 1, x)) unite(parent, i, i - width);
        if (x > 0 && on(y - 1, x - 1)) unite(parent, i, i - width - 1);
        if (x + 1 < width && on(y - 1, x + 1)) unite(parent, i, i - width + 1);
      }
    }

  std::vector<std::size_t> slot(n, n);
  std::vector<Blob> blobs;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(map[i] > threshold)) continue;
    const std::size_t r = find_root(parent, i);
    if (slot[r] == n) {
      slot[r] = blobs.size();
      blobs.emplace_back();
    }
    blobs[slot[r]].pixels.push_back(i);
  }
  std::vector<Blob> kept;
  for (auto& b : blobs) {
    b.area = b.pixels.size();
    if (b.area < min_area) continue;
    double sx = 0, sy = 0;
    for (std::size_t p : b.pixels) {
      sx += double(p % width);
      sy += double(p / width);
    }
    b.cx = sx / double(b.area);
    b.cy = sy / double(b.area);
    kept.push_back(std::move(b));
  }
  std::stable_sort(kept.begin(), kept.end(), [](const Blob& a, const Blob& b) { return a.area > b.area; });
  return kept;
}

double center_distance(const Blob& blob, std::size_t height, std::size_t width) {
  return std::hypot(blob.cx - (double(width) - 1) / 2, blob.cy - (double(height) - 1) / 2);
}

Aggregate describe(std::span<const double> values) {
  Aggregate a;
  a.n = values.size();
  if (values.empty()) return a;
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  double s = 0;
  for (double x : v) s += x;
  const double mean = s / double(v.size());
  double q = 0;
  for (double x : v) q += (x - mean) * (x - mean);
  a.mean = mean;
  a.stddev = std::sqrt(q / double(v.size()));
  return a;
}

FrameBlobs volume_blobs(const Tensor<double>& volume, const BlobConfig& config) {
  if (volume.rank() != 3) throw ShapeError("blobs: volume must be [T, H, W], got " + shape_string(volume.shape()));
  const std::size_t T = volume.extent(0), H = volume.extent(1), W = volume.extent(2), HW = H * W;
  FrameBlobs out;
  out.counts.assign(T, 0);
  const auto& data = volume.data();
  const double peak = data.empty() ? 0.0 : *std::max_element(data.begin(), data.end());
  if (!(peak > 0)) return out;
  std::vector<double> frame(HW);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t p = 0; p < HW; ++p) frame[p] = data[t * HW + p] / peak;
    const auto blobs = detect_blobs(frame, H, W, config.threshold, config.min_area);
    out.counts[t] = blobs.size();
    for (const auto& b : blobs) {
      out.sizes.push_back(double(b.area));
      out.distances.push_back(center_distance(b, H, W));
    }
  }
  return out;
}

BlobStatistics blob_statistics(std::span<const FrameBlobs> volumes) {
  std::vector<double> counts, sizes, distances;
  for (const auto& v : volumes) {
    for (auto c : v.counts) counts.push_back(double(c));
    sizes.insert(sizes.end(), v.sizes.begin(), v.sizes.end());
    distances.insert(distances.end(), v.distances.begin(), v.distances.end());
  }
  return {describe(counts), describe(sizes), describe(distances)};
}

BlobStatistics blob_statistics(std::span<const Tensor<double>> volumes, const BlobConfig& config) {
  std::vector<FrameBlobs> all;
  for (const auto& v : volumes) all.push_back(volume_blobs(v, config));
  return blob_statistics(all);
}

std::size_t mask_length(std::span<const double> activation, double threshold) {
  return std::size_t(std::count_if(activation.begin(), activation.end(), [&](double m) { return m > threshold; }));
}

DropRecord drop(double os, double fs, double rs, double eps) {
  DropRecord d{os, fs, rs};
  d.difference = rs - fs;
  d.excluded = os - rs <= eps || os - fs <= eps;
  d.ratio = d.excluded ? std::numeric_limits<double>::quiet_NaN() : (os - fs) / (os - rs);
  return d;
}

DropStatistics drop_statistics(std::span<const DropRecord> records) {
  DropStatistics s;
  s.total = records.size();
  std::vector<double> ratio, diff;
  for (const auto& r : records) {
    if (r.excluded) {
      ++s.excluded;
      continue;
    }
    ratio.push_back(r.ratio);
    diff.push_back(r.difference);
  }
  s.ratio = describe(ratio);
  s.difference = describe(diff);
  return s;
}

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0) || !(b > 0) || !(x >= 0 && x <= 1)) throw ValueError("incomplete beta: need a, b > 0 and x in [0, 1]");
  if (x == 0 || x == 1) return x;
  // modified Lentz evaluation of the continued fraction
  auto fraction = [](double a, double b, double x) {
    constexpr double tiny = 1e-300, tol = 1e-15;
    double c = 1, d = 1 - (a + b) * x / (a + 1);
    if (std::fabs(d) < tiny) d = tiny;
    d = 1 / d;
    double h = d;
    for (int m = 1; m <= 10000; ++m) {
      const double m2 = 2.0 * m;
      double aa = m * (b - m) * x / ((a + m2 - 1) * (a + m2));
      d = 1 + aa * d;
      if (std::fabs(d) < tiny) d = tiny;
      c = 1 + aa / c;
      if (std::fabs(c) < tiny) c = tiny;
      d = 1 / d;
      h *= d * c;
      aa = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1));
      d = 1 + aa * d;
      if (std::fabs(d) < tiny) d = tiny;
      c = 1 + aa / c;
      if (std::fabs(c) < tiny) c = tiny;
      d = 1 / d;
      const double del = d * c;
      h *= del;
      if (std::fabs(del - 1) < tol) return h;
    }
    throw ValueError("incomplete beta: continued fraction did not converge");
  };
  const double front =
      std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x));
  if (x < (a + 1) / (a + b + 2)) return front * fraction(a, b, x) / a;
  return 1 - front * fraction(b, a, 1 - x) / b;
}

TTest welch_ttest(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw ValueError("welch: each sample needs at least two values");
  for (auto s : {a, b})
    for (double v : s)
      if (!std::isfinite(v)) throw ValueError("welch: non-finite value");
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / double(a.size());
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / double(b.size());
  const double qa = sample_variance(a, ma) / double(a.size());
  const double qb = sample_variance(b, mb) / double(b.size());
  const double se2 = qa + qb;
  if (!(se2 > 0)) throw ValueError("welch: both samples have zero variance");
  TTest r;
  r.t = (ma - mb) / std::sqrt(se2);
  r.df = se2 * se2 / (qa * qa / double(a.size() - 1) + qb * qb / double(b.size() - 1));
  r.p = regularized_incomplete_beta(r.df / 2, 0.5, r.df / (r.df + r.t * r.t));
  return r;
}

Histogram histogram(std::span<const double> values, std::size_t bins, double lo, double hi) {
  if (bins == 0) throw ValueError("histogram: bins must be at least 1");
  if (!(lo < hi)) throw ValueError("histogram: range must satisfy lo < hi");
  Histogram h;
  h.lo = lo;
  h.hi = hi;
  h.n = values.size();
  h.fractions.assign(bins, 0.0);
  if (values.empty()) return h;
  std::vector<std::size_t> counts(bins, 0);
  std::size_t below = 0, above = 0;
  const double width = (hi - lo) / double(bins);
  for (double v : values) {
    if (std::isnan(v)) throw ValueError("histogram: NaN value");
    if (v < lo) {
      ++below;
    } else if (v > hi) {
      ++above;
    } else {
      counts[std::min(bins - 1, std::size_t((v - lo) / width))]++;
    }
  }
  const double n = double(values.size());
  for (std::size_t i = 0; i < bins; ++i) h.fractions[i] = double(counts[i]) / n;
  h.below = double(below) / n;
  h.above = double(above) / n;
  return h;
}

std::optional<double> sequence_value(const SequenceMetrics& s, std::string_view metric) {
  if (metric == "blob_count") {
    if (s.blobs.counts.empty()) return std::nullopt;
    std::vector<double> c(s.blobs.counts.begin(), s.blobs.counts.end());
    return describe(c).mean;
  }
  if (metric == "blob_size") return describe(s.blobs.sizes).mean;
  if (metric == "center_distance") return describe(s.blobs.distances).mean;
  if (metric == "mask_length") return double(s.mask_length);
  if (metric == "drop_ratio") return s.drop.excluded ? std::nullopt : std::optional<double>(s.drop.ratio);
  if (metric == "drop_difference") return s.drop.excluded ? std::nullopt : std::optional<double>(s.drop.difference);
  throw ValueError("unknown metric '" + std::string(metric) + "'");
}

MetricsSummary summarize(std::span<const SequenceMetrics> a, std::span<const SequenceMetrics> b,
                         const SummaryConfig& config) {
  if (config.bins == 0) throw ValueError("summary: bins must be at least 1");
  MetricsSummary out;
  out.config = config;
  auto model_summary = [](std::span<const SequenceMetrics> seqs) {
    ModelSummary m;
    m.model = seqs.empty() ? std::string() : seqs.front().model;
    m.sequences = seqs.size();
    std::vector<FrameBlobs> blobs;
    std::vector<double> lengths;
    std::vector<DropRecord> drops;
    for (const auto& s : seqs) {
      blobs.push_back(s.blobs);
      lengths.push_back(double(s.mask_length));
      drops.push_back(s.drop);
    }
    m.blobs = blob_statistics(blobs);
    m.mask_length = describe(lengths);
    m.drops = drop_statistics(drops);
    return m;
  };
  out.a = model_summary(a);
  out.b = model_summary(b);

  for (const char* metric : kMetricNames) {
    MetricComparison c;
    c.metric = metric;
    const auto va = values_of(a, metric), vb = values_of(b, metric);
    c.a = describe(va);
    c.b = describe(vb);
    try {
      c.ttest = welch_ttest(va, vb);
    } catch (const ValueError& e) {
      if (va.size() >= 2 && vb.size() >= 2 && c.a.stddev == 0.0 && c.b.stddev == 0.0 && c.a.mean == c.b.mean) {
        c.ttest = TTest{0.0, std::numeric_limits<double>::quiet_NaN(), 1.0};
        c.note = "both samples constant and equal";
      } else {
        c.note = e.what();
      }
    }
    std::vector<double> all(va);
    all.insert(all.end(), vb.begin(), vb.end());
    double lo = 0, hi = 1;
    if (!all.empty()) {
      lo = *std::min_element(all.begin(), all.end());
      hi = *std::max_element(all.begin(), all.end());
      if (!(lo < hi)) {
        lo -= 0.5;
        hi += 0.5;
      }
    }
    c.hist_a = histogram(va, config.bins, lo, hi);
    c.hist_b = histogram(vb, config.bins, lo, hi);
    out.comparisons.push_back(std::move(c));
  }
  return out;
}

void write_sequences_csv(const std::filesystem::path& path, std::span<const SequenceMetrics> a,
                         std::span<const SequenceMetrics> b) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "clip_id,model,true_class,predicted_class,os,fs,rs,drop_ratio,drop_difference,excluded,mask_length,"
         "frames,blob_count_mean,blob_size_mean,center_distance_mean,blob_counts\n";
  for (auto seqs : {a, b})
    for (const auto& s : seqs) {
      std::string counts;
      for (auto c : s.blobs.counts) counts += (counts.empty() ? "" : " ") + std::to_string(c);
      out << s.clip_id << ',' << s.model << ',' << s.true_class << ',' << s.predicted_class << ',' << num(s.drop.os)
          << ',' << num(s.drop.fs) << ',' << num(s.drop.rs) << ',' << num(sequence_value(s, "drop_ratio")) << ','
          << num(s.drop.difference) << ',' << (s.drop.excluded ? 1 : 0) << ',' << s.mask_length << ','
          << s.blobs.counts.size() << ',' << num(sequence_value(s, "blob_count")) << ','
          << num(sequence_value(s, "blob_size")) << ',' << num(sequence_value(s, "center_distance")) << ',' << counts
          << '\n';
    }
  if (!out) throw IoError("failed writing " + path.string());
}

void write_histograms_csv(const std::filesystem::path& path, const MetricsSummary& summary) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "metric,model,bin,lo,hi,fraction\n";
  for (const auto& c : summary.comparisons) {
    for (const auto* side : {&c.hist_a, &c.hist_b}) {
      const auto& model = side == &c.hist_a ? summary.a.model : summary.b.model;
      const auto& h = *side;
      const double w = (h.hi - h.lo) / double(h.fractions.size());
      for (std::size_t i = 0; i < h.fractions.size(); ++i) {
        out << c.metric << ',' << model << ',' << i << ',' << num(h.lo + double(i) * w) << ','
            << num(i + 1 == h.fractions.size() ? h.hi : h.lo + double(i + 1) * w) << ',' << num(h.fractions[i]) << '\n';
      }
      out << c.metric << ',' << model << ",below,," << num(h.lo) << ',' << num(h.below) << '\n';
      out << c.metric << ',' << model << ",above," << num(h.hi) << ",," << num(h.above) << '\n';
    }
  }
  if (!out) throw IoError("failed writing " + path.string());
}

void write_ttests_csv(const std::filesystem::path& path, const MetricsSummary& summary) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "metric,model_a,model_b,n_a,n_b,mean_a,mean_b,std_a,std_b,t,df,p,note\n";
  for (const auto& c : summary.comparisons) {
    out << c.metric << ',' << summary.a.model << ',' << summary.b.model << ',' << c.a.n << ',' << c.b.n << ','
        << num(c.a.mean) << ',' << num(c.b.mean) << ',' << num(c.a.stddev) << ',' << num(c.b.stddev) << ',';
    if (c.ttest) {
      out << num(c.ttest->t) << ',' << (std::isfinite(c.ttest->df) ? num(c.ttest->df) : "") << ',' << num(c.ttest->p);
    } else {
      out << ",,";
    }
    std::string note = c.note;
    std::replace(note.begin(), note.end(), ',', ';');
    out << ',' << note << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

void write_summary_json(const std::filesystem::path& path, const MetricsSummary& summary) {
  nlohmann::json j;
  j["settings"] = {{"blob_threshold", summary.config.blobs.threshold},
                   {"blob_min_area", summary.config.blobs.min_area},
                   {"blob_connectivity", 8},
                   {"blob_normalization", "volume max"},
                   {"mask_threshold", summary.config.mask_threshold},
                   {"drop_eps", summary.config.drop_eps},
                   {"bins", summary.config.bins},
                   {"stddev", "population"}};
  nlohmann::json models = nlohmann::json::array();
  for (const auto* m : {&summary.a, &summary.b}) {
    models.push_back({{"model", m->model},
                      {"sequences", m->sequences},
                      {"blob_count", to_json(m->blobs.count)},
                      {"blob_size", to_json(m->blobs.size)},
                      {"center_distance", to_json(m->blobs.distance)},
                      {"mask_length", to_json(m->mask_length)},
                      {"drop_ratio", to_json(m->drops.ratio)},
                      {"drop_difference", to_json(m->drops.difference)},
                      {"drop_excluded", m->drops.excluded}});
  }
  j["models"] = models;
  nlohmann::json tests = nlohmann::json::array();
  for (const auto& c : summary.comparisons) {
    nlohmann::json t{{"metric", c.metric}, {"a", to_json(c.a)}, {"b", to_json(c.b)}};
    if (c.ttest) {
      t["t"] = finite_or_null(c.ttest->t);
      t["df"] = finite_or_null(c.ttest->df);
      t["p"] = finite_or_null(c.ttest->p);
    } else {
      t["t"] = t["df"] = t["p"] = nullptr;
    }
    if (!c.note.empty()) t["note"] = c.note;
    tests.push_back(t);
  }
  j["ttests"] = tests;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace vidsal::metrics
