#pragma once

// Procedural CT-like volumes with geometric findings and templated reports.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ctgpt/tensor/random.hpp"
#include "ctgpt/volume/ctvol.hpp"

namespace ctgpt::synth {

enum class FindingKind { None, Sphere, Box };

/// Long, boilerplate-heavy reports vs. terse ones. The two styles also use
/// different wording for the same finding.
enum class ReportStyle { LongReport, ShortReport };

ReportStyle parse_report_style(const std::string& s);
std::string to_string(ReportStyle s);

struct FindingSpec {
  FindingKind kind = FindingKind::None;
  std::array<std::size_t, 3> center{};  // (z, y, x) voxels
  double radius_mm = 0.0;               // sphere radius / box half-extent
  float intensity = 0.0f;               // HU
};

inline constexpr float kBackgroundHu = -1000.0f;

/// Voxel half-extent per axis of a finding of `radius_mm` on `spacing`.
std::array<std::size_t, 3> half_extent_voxels(double radius_mm, const volume::Spacing3& spacing);

/// Draws up to 3 non-overlapping findings, sorted by centre (z, y, x). A
/// finding that finds no free spot after 64 tries is dropped. Throws
/// GenerationError when a finding cannot fit inside `dims` at all.
std::vector<FindingSpec> sample_findings(Rng& rng, const volume::Dims3& dims, const volume::Spacing3& spacing);

/// Renders findings into a background volume with slope 1 / intercept 0 so
/// raw values are HU.
volume::CtVolume render(const std::vector<FindingSpec>& findings, const volume::Dims3& dims,
                        const volume::Spacing3& spacing, std::string id = {});

/// Deterministic report text for `findings` (already normalized).
std::string report_text(const std::vector<FindingSpec>& findings, ReportStyle style, const volume::Dims3& dims);

/// The sentence every zero-finding report contains.
const std::string& normal_sentence(ReportStyle style);

struct ManifestRecord {
  std::string volume;  // path relative to the manifest directory
  std::string report;
  std::string split;   // train | val | test

  std::string id() const;
  bool operator==(const ManifestRecord&) const = default;
};

struct Manifest {
  std::vector<ManifestRecord> records;

  /// One JSON object per line with keys volume, report, split.
  std::string to_jsonl() const;
  static Manifest from_jsonl(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static Manifest load(const std::filesystem::path& path);

  std::vector<ManifestRecord> split(const std::string& name) const;
};

/// Seeded shuffle, then contiguous partition. Counts use largest remainders,
/// ties going to the earlier split. Records keep their input order.
Manifest split_manifest(std::vector<ManifestRecord> records, std::array<double, 3> ratios, std::uint64_t seed);

struct CorpusSpec {
  std::size_t n = 40;
  ReportStyle style = ReportStyle::ShortReport;
  volume::Dims3 dims{24, 48, 48};
  std::array<std::size_t, 3> patch{3, 6, 6};
  volume::Spacing3 spacing{1.5, 0.75, 0.75};
  std::array<double, 3> split_ratios{0.8, 0.1, 0.1};
  std::string id_prefix = "rec";
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticRecord {
  std::vector<FindingSpec> findings;
  volume::CtVolume volume;
  std::string report;
};

/// In-memory corpus; record i uses derive_seed(spec.seed, i).
std::vector<SyntheticRecord> generate_records(const CorpusSpec& spec);

/// Writes `<out_dir>/volumes/<id>.ctvl` and `<out_dir>/manifest.jsonl`.
Manifest generate_corpus(const CorpusSpec& spec, const std::filesystem::path& out_dir);

}  // namespace ctgpt::synth
