#pragma once

// Comparison statistics for two explained models: spatial blobs of the
// Grad-CAM maps, temporal mask length, score drops under freeze and reverse,
// histograms and Welch's unequal-variance t-test.

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vidsal/tensor.hpp"

namespace vidsal::metrics {

struct Blob {
  std::vector<std::size_t> pixels;  // row-major indices, ascending
  std::size_t area = 0;
  double cx = 0;  // centroid column
  double cy = 0;  // centroid row
};

struct BlobConfig {
  double threshold = 0.4;  // relative to the volume maximum
  std::size_t min_area = 4;
};

// 8-connected components of {map > threshold} with at least min_area pixels,
// largest first (ties: earliest first pixel).
std::vector<Blob> detect_blobs(std::span<const double> map, std::size_t height, std::size_t width, double threshold,
                               std::size_t min_area);

// Euclidean distance from the centroid to ((W - 1) / 2, (H - 1) / 2).
double center_distance(const Blob& blob, std::size_t height, std::size_t width);

// Mean and population standard deviation; both absent for no values.
struct Aggregate {
  std::size_t n = 0;
  std::optional<double> mean;
  std::optional<double> stddev;
};
Aggregate describe(std::span<const double> values);  // order-independent

// Blobs of every frame of a [T, H, W] volume, with the maps divided by the
// volume maximum first. An all-zero volume has no blobs.
struct FrameBlobs {
  std::vector<std::size_t> counts;  // per frame
  std::vector<double> sizes;        // per blob
  std::vector<double> distances;    // per blob
};
FrameBlobs volume_blobs(const Tensor<double>& volume, const BlobConfig& config = {});

struct BlobStatistics {
  Aggregate count;     // blobs per frame, over frames
  Aggregate size;      // pixels per blob, over blobs
  Aggregate distance;  // centroid to frame centre, over blobs
};
BlobStatistics blob_statistics(std::span<const FrameBlobs> volumes);
BlobStatistics blob_statistics(std::span<const Tensor<double>> volumes, const BlobConfig& config = {});

// Frames whose mask activation exceeds the threshold.
std::size_t mask_length(std::span<const double> activation, double threshold = 0.1);

struct DropRecord {
  double os = 0, fs = 0, rs = 0;
  double ratio = 0;       // (OS - FS) / (OS - RS), valid when not excluded
  double difference = 0;  // RS - FS
  bool excluded = false;  // OS - RS <= eps or OS - FS <= eps
};
DropRecord drop(double os, double fs, double rs, double eps = 1e-3);

struct DropStatistics {
  std::size_t total = 0;
  std::size_t excluded = 0;
  Aggregate ratio;       // over included records
  Aggregate difference;  // over included records
};
DropStatistics drop_statistics(std::span<const DropRecord> records);

struct TTest {
  double t = 0;
  double df = 0;
  double p = 1;  // two-sided
};
// Throws ValueError when a sample has fewer than two values, a value is not
// finite, or both samples have zero variance.
TTest welch_ttest(std::span<const double> a, std::span<const double> b);

// I_x(a, b), a, b > 0, x in [0, 1].
double regularized_incomplete_beta(double a, double b, double x);

struct Histogram {
  double lo = 0, hi = 1;
  std::vector<double> fractions;  // per bin, of all values
  double below = 0, above = 0;    // fractions outside [lo, hi]
  std::size_t n = 0;
};
// Bins are [lo + i w, lo + (i + 1) w); hi itself lands in the last bin.
Histogram histogram(std::span<const double> values, std::size_t bins, double lo, double hi);

// Everything one explained clip contributes to the comparison.
struct SequenceMetrics {
  std::string clip_id;
  std::string model;
  std::size_t true_class = 0;
  std::size_t predicted_class = 0;
  DropRecord drop;
  std::size_t mask_length = 0;
  FrameBlobs blobs;
};

inline constexpr std::array<const char*, 6> kMetricNames{"blob_count",  "blob_size",  "center_distance",
                                                         "mask_length", "drop_ratio", "drop_difference"};

// Per-sequence value of a metric; absent for an excluded drop or a sequence
// without blobs.
std::optional<double> sequence_value(const SequenceMetrics& s, std::string_view metric);

struct SummaryConfig {
  BlobConfig blobs;
  double mask_threshold = 0.1;
  double drop_eps = 1e-3;
  std::size_t bins = 10;
};

struct ModelSummary {
  std::string model;
  std::size_t sequences = 0;
  BlobStatistics blobs;
  Aggregate mask_length;
  DropStatistics drops;
};

struct MetricComparison {
  std::string metric;
  Aggregate a, b;  // per-sequence values
  std::optional<TTest> ttest;
  std::string note;  // why the test is missing or special-cased
  Histogram hist_a, hist_b;
};

struct MetricsSummary {
  SummaryConfig config;
  ModelSummary a, b;
  std::vector<MetricComparison> comparisons;  // kMetricNames order
};

// Sequences of the two models; the model name is taken from the first record
// of each list. Histograms of a metric share one range across both models.
MetricsSummary summarize(std::span<const SequenceMetrics> a, std::span<const SequenceMetrics> b,
                         const SummaryConfig& config = {});

// sequences.csv: one row per sequence, empty cells for absent values.
void write_sequences_csv(const std::filesystem::path& path, std::span<const SequenceMetrics> a,
                         std::span<const SequenceMetrics> b);
// histograms.csv: metric,model,bin,lo,hi,fraction plus below/above rows.
void write_histograms_csv(const std::filesystem::path& path, const MetricsSummary& summary);
// ttests.csv: metric,model_a,model_b,n_a,n_b,mean_a,mean_b,std_a,std_b,t,df,p,note
void write_ttests_csv(const std::filesystem::path& path, const MetricsSummary& summary);
// summary.json: the model tables, t-tests and the settings used.
void write_summary_json(const std::filesystem::path& path, const MetricsSummary& summary);

}  // namespace vidsal::metrics
