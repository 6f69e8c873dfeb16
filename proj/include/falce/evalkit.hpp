/**
 * @file evalkit.hpp
 * @brief Detection evaluation (per-class AP, mAP) and dataset manifest splits
 */
#pragma once

#include "falce/geometry.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace falce::evalkit {

inline constexpr double kDefaultIouThreshold = 0.5;
inline constexpr int kNumClasses = 4;

struct Detection {
    std::string image_id;
    int class_id = 0;
    BBox box;
    double score = 0.0;
};

struct GroundTruth {
    std::string image_id;
    int class_id = 0;
    BBox box;
};

enum class Density { A, B, C, D };

std::optional<Density> parse_density(const std::string& text);
char density_letter(Density d);

struct Finding {
    std::string label;
    BBox box;
};

struct ManifestRecord {
    std::string image_id;
    std::string path;
    Density density = Density::A;
    std::vector<Finding> raw_findings;
};

/// Greedy score-ordered matching with all-point interpolated AP. Each detection
/// claims the still-unmatched ground truth of its image and class with the
/// highest IoU >= iou_thr (lowest index on ties). Returns 0 when the class has no
/// ground truth.
double average_precision(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts, int class_id,
                         double iou_thr = kDefaultIouThreshold);

/// Unweighted mean of AP over classes in [0, num_classes) with at least one ground truth.
double mean_ap(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts, int num_classes,
               double iou_thr = kDefaultIouThreshold);

struct ApReport {
    std::vector<std::pair<int, double>> per_class;  // classes with ground truth only
    double map = 0.0;
};

ApReport evaluate(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts, int num_classes,
                  double iou_thr = kDefaultIouThreshold);

/// `class_id,ap` rows followed by `mAP,<value>`; six decimals.
void write_report_csv(const ApReport& report, std::ostream& out);

/// MS -> 0, SC -> 1, AS (any asymmetry) -> 2, LN -> 3, anything else -> none. Case-insensitive.
std::optional<int> map_classes(const std::string& raw_label);

/// Mapped class ids of a record's findings, sorted and unique.
std::vector<int> label_signature(const ManifestRecord& r);

struct DensitySplit {
    std::vector<ManifestRecord> denb;  // densities C, D
    std::vector<ManifestRecord> fatb;  // densities A, B
};

DensitySplit split_by_density(const std::vector<ManifestRecord>& manifest);

struct TrainTestSplit {
    std::vector<ManifestRecord> train;
    std::vector<ManifestRecord> test;
};

/// Stratifies by label signature, shuffles each stratum with the seed and sends the
/// first ceil(fraction * n) records to train. Both outputs keep manifest order.
TrainTestSplit stratified_split(const std::vector<ManifestRecord>& records, double train_fraction,
                                std::uint64_t seed);

/// Manifest CSV `image_id,path,density,label,x1,y1,x2,y2`, one row per finding.
/// Relative paths are kept as written. Throws IoError with line numbers.
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);

/// Detections CSV `image_id,class_id,score,x1,y1,x2,y2`.
std::vector<Detection> read_detections(const std::filesystem::path& path);

/// Ground truth either as `image_id,class_id,x1,y1,x2,y2` or as a manifest whose
/// labels are mapped with map_classes (unmapped findings dropped).
std::vector<GroundTruth> read_ground_truth(const std::filesystem::path& path);

}  // namespace falce::evalkit
