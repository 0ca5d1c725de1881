#include "ctgpt/synth/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "../common/binary_io.hpp"
#include "ctgpt/errors.hpp"
#include "ctgpt/lm/vocab.hpp"

namespace ctgpt::synth {
namespace {

constexpr double kSmallRadii[] = {4.5, 5.25};
constexpr double kLargeRadii[] = {6.75, 7.5};
constexpr float kIntensities[] = {-300.0f, 40.0f, 180.0f};

bool is_large(const FindingSpec& f) { return f.radius_mm >= 6.0; }

std::size_t density_class(const FindingSpec& f) {
  if (f.intensity < -200.0f) return 0;
  if (f.intensity < 100.0f) return 1;
  return 2;
}

std::string zone(const FindingSpec& f, const volume::Dims3& dims) {
  const std::size_t z = f.center[0];
  if (3 * z < dims[0]) return "upper";
  if (3 * z < 2 * dims[0]) return "middle";
  return "lower";
}

std::string side(const FindingSpec& f, const volume::Dims3& dims) {
  return 2 * f.center[2] < dims[2] ? "right" : "left";
}

std::string short_sentence(const FindingSpec& f, const volume::Dims3& dims) {
  static const char* kDensity[] = {"ground-glass", "soft-tissue", "calcified"};
  const char* shape = f.kind == FindingKind::Sphere ? "nodule" : "mass";
  std::ostringstream os;
  os << (is_large(f) ? "large " : "small ") << kDensity[density_class(f)] << ' ' << shape << " in the "
     << zone(f, dims) << ' ' << side(f, dims) << " region.";
  return os.str();
}

std::string long_sentence(const FindingSpec& f, const volume::Dims3& dims) {
  static const char* kDensity[] = {"hazy ground-glass attenuation", "soft tissue attenuation",
                                   "dense calcific attenuation"};
  const char* shape = f.kind == FindingKind::Sphere ? "a rounded nodular opacity" : "a well-circumscribed lesion";
  std::ostringstream os;
  os << "there is " << shape << " of " << kDensity[density_class(f)] << " within the " << zone(f, dims)
     << " zone of the " << side(f, dims) << " lung, measuring approximately "
     << static_cast<int>(std::lround(2.0 * f.radius_mm)) << " mm"
     << (is_large(f) ? " and considered significant." : " and likely of limited significance.");
  return os.str();
}

const char* count_word(std::size_t n) {
  static const char* kWords[] = {"no", "one", "two", "three"};
  return n < 4 ? kWords[n] : "several";
}

bool overlaps(const FindingSpec& a, const FindingSpec& b, const volume::Spacing3& spacing) {
  const auto ea = half_extent_voxels(a.radius_mm, spacing);
  const auto eb = half_extent_voxels(b.radius_mm, spacing);
  for (int ax = 0; ax < 3; ++ax) {
    const auto lo_a = static_cast<long>(a.center[ax]) - static_cast<long>(ea[ax]);
    const auto hi_a = static_cast<long>(a.center[ax]) + static_cast<long>(ea[ax]);
    const auto lo_b = static_cast<long>(b.center[ax]) - static_cast<long>(eb[ax]);
    const auto hi_b = static_cast<long>(b.center[ax]) + static_cast<long>(eb[ax]);
    // One voxel of clearance keeps findings visually separate.
    if (hi_a + 1 < lo_b || hi_b + 1 < lo_a) return false;
  }
  return true;
}

}  // namespace

ReportStyle parse_report_style(const std::string& s) {
  if (s == "long_report") return ReportStyle::LongReport;
  if (s == "short_report") return ReportStyle::ShortReport;
  throw ArgumentError("unknown report style '" + s + "' (expected long_report or short_report)");
}

std::string to_string(ReportStyle s) { return s == ReportStyle::LongReport ? "long_report" : "short_report"; }

std::array<std::size_t, 3> half_extent_voxels(double radius_mm, const volume::Spacing3& spacing) {
  std::array<std::size_t, 3> e{};
  for (int a = 0; a < 3; ++a) e[a] = static_cast<std::size_t>(std::floor(radius_mm / spacing[a] + 1e-9));
  return e;
}

std::vector<FindingSpec> sample_findings(Rng& rng, const volume::Dims3& dims, const volume::Spacing3& spacing) {
  const auto count = static_cast<std::size_t>(rng.below(4));
  std::vector<FindingSpec> out;
  for (std::size_t i = 0; i < count; ++i) {
    FindingSpec f;
    f.kind = rng.below(2) == 0 ? FindingKind::Sphere : FindingKind::Box;
    const bool large = rng.below(2) == 1;
    f.radius_mm = large ? kLargeRadii[rng.below(2)] : kSmallRadii[rng.below(2)];
    f.intensity = kIntensities[rng.below(3)];
    const auto ext = half_extent_voxels(f.radius_mm, spacing);
    for (int a = 0; a < 3; ++a) {
      if (2 * ext[a] + 1 > dims[a]) {
        throw GenerationError("finding of radius " + std::to_string(f.radius_mm) + " mm does not fit axis " +
                              std::to_string(a) + " of length " + std::to_string(dims[a]));
      }
    }
    bool placed = false;
    for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
      for (int a = 0; a < 3; ++a) {
        f.center[a] = ext[a] + static_cast<std::size_t>(rng.below(dims[a] - 2 * ext[a]));
      }
      placed = std::none_of(out.begin(), out.end(), [&](const FindingSpec& g) { return overlaps(f, g, spacing); });
    }
    // A crowded volume simply ends up with fewer findings.
    if (placed) out.push_back(f);
  }
  std::sort(out.begin(), out.end(), [](const FindingSpec& a, const FindingSpec& b) { return a.center < b.center; });
  return out;
}

volume::CtVolume render(const std::vector<FindingSpec>& findings, const volume::Dims3& dims,
                        const volume::Spacing3& spacing, std::string id) {
  volume::CtVolume v;
  v.dims = dims;
  v.spacing_mm = {static_cast<float>(spacing[0]), static_cast<float>(spacing[1]), static_cast<float>(spacing[2])};
  v.slope = 1.0f;
  v.intercept = 0.0f;
  v.id = std::move(id);
  v.voxels.assign(volume::voxel_count(dims), static_cast<std::int16_t>(kBackgroundHu));
  for (const auto& f : findings) {
    if (f.kind == FindingKind::None) continue;
    if (f.intensity < -1000.0f || f.intensity > 200.0f) {
      throw GenerationError("finding intensity outside [-1000, 200] HU");
    }
    const auto ext = half_extent_voxels(f.radius_mm, spacing);
    for (int a = 0; a < 3; ++a) {
      if (f.center[a] < ext[a] || f.center[a] + ext[a] >= dims[a]) {
        throw GenerationError("finding geometry exceeds volume bounds on axis " + std::to_string(a));
      }
    }
    const auto value = static_cast<std::int16_t>(f.intensity);
    for (std::size_t z = f.center[0] - ext[0]; z <= f.center[0] + ext[0]; ++z) {
      for (std::size_t y = f.center[1] - ext[1]; y <= f.center[1] + ext[1]; ++y) {
        for (std::size_t x = f.center[2] - ext[2]; x <= f.center[2] + ext[2]; ++x) {
          if (f.kind == FindingKind::Sphere) {
            const double dz = (static_cast<double>(z) - static_cast<double>(f.center[0])) * spacing[0];
            const double dy = (static_cast<double>(y) - static_cast<double>(f.center[1])) * spacing[1];
            const double dx = (static_cast<double>(x) - static_cast<double>(f.center[2])) * spacing[2];
            if (dz * dz + dy * dy + dx * dx > f.radius_mm * f.radius_mm) continue;
          }
          v.voxels[(z * dims[1] + y) * dims[2] + x] = value;
        }
      }
    }
  }
  return v;
}

const std::string& normal_sentence(ReportStyle style) {
  static const std::string kShort = "no acute abnormality.";
  static const std::string kLong =
      "the lungs are clear without focal consolidation, mass or nodule, and there is no pleural effusion.";
  return style == ReportStyle::ShortReport ? kShort : kLong;
}

std::string report_text(const std::vector<FindingSpec>& findings, ReportStyle style, const volume::Dims3& dims) {
  std::vector<const FindingSpec*> real;
  for (const auto& f : findings) {
    if (f.kind != FindingKind::None) real.push_back(&f);
  }
  std::ostringstream os;
  if (style == ReportStyle::ShortReport) {
    if (real.empty()) os << normal_sentence(style);
    for (std::size_t i = 0; i < real.size(); ++i) os << (i ? " " : "") << short_sentence(*real[i], dims);
  } else {
    os << "technique: axial images of the chest were acquired without intravenous contrast. findings: ";
    if (real.empty()) {
      os << normal_sentence(style) << " impression: no acute cardiopulmonary abnormality.";
    } else {
      for (const auto* f : real) os << long_sentence(*f, dims) << ' ';
      os << "the remaining lung parenchyma is otherwise unremarkable. impression: " << count_word(real.size())
         << " focal " << (real.size() == 1 ? "finding" : "findings") << " as described above.";
    }
  }
  return lm::normalize_text(os.str());
}

std::string ManifestRecord::id() const { return std::filesystem::path(volume).stem().string(); }

std::string Manifest::to_jsonl() const {
  std::string out;
  for (const auto& r : records) {
    nlohmann::ordered_json j{{"volume", r.volume}, {"report", r.report}, {"split", r.split}};
    out += j.dump() + "\n";
  }
  return out;
}

Manifest Manifest::from_jsonl(std::string_view text) {
  Manifest m;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ManifestRecord r{j.at("volume").get<std::string>(), j.at("report").get<std::string>(),
                       j.at("split").get<std::string>()};
      if (r.split != "train" && r.split != "val" && r.split != "test") {
        throw DataError("unknown split '" + r.split + "'");
      }
      m.records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("manifest line " + std::to_string(lineno) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("manifest line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return m;
}

void Manifest::save(const std::filesystem::path& path) const { detail::write_file(path.string(), to_jsonl()); }

Manifest Manifest::load(const std::filesystem::path& path) { return from_jsonl(detail::read_file(path.string())); }

std::vector<ManifestRecord> Manifest::split(const std::string& name) const {
  std::vector<ManifestRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [&](const ManifestRecord& r) { return r.split == name; });
  return out;
}

Manifest split_manifest(std::vector<ManifestRecord> records, std::array<double, 3> ratios, std::uint64_t seed) {
  if (records.empty()) throw ArgumentError("split_manifest: no records");
  double total = 0.0;
  for (double r : ratios) {
    if (r < 0.0) throw ArgumentError("split_manifest: negative ratio");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ArgumentError("split_manifest: ratios must sum to 1");

  const std::size_t n = records.size();
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> frac{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = ratios[i] * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    frac[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[order[k % 3]];

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  rng.shuffle(perm.begin(), perm.end());
  static const char* kNames[] = {"train", "val", "test"};
  std::size_t pos = 0;
  for (int s = 0; s < 3; ++s) {
    for (std::size_t c = 0; c < counts[s]; ++c) records[perm[pos++]].split = kNames[s];
  }
  return Manifest{std::move(records)};
}

void CorpusSpec::validate() const {
  if (n < 10) throw ArgumentError("corpus size must be >= 10, got " + std::to_string(n));
  for (int a = 0; a < 3; ++a) {
    if (patch[a] == 0 || dims[a] % patch[a] != 0) {
      throw ArgumentError("corpus dims axis " + std::to_string(a) + " (" + std::to_string(dims[a]) +
                          ") not divisible by patch " + std::to_string(patch[a]));
    }
  }
}

std::vector<SyntheticRecord> generate_records(const CorpusSpec& spec) {
  spec.validate();
  const int width = std::max<int>(4, static_cast<int>(std::to_string(spec.n - 1).size()));
  std::vector<SyntheticRecord> out;
  out.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    Rng rng(derive_seed(spec.seed, i));
    std::string num = std::to_string(i);
    std::string id = spec.id_prefix + std::string(static_cast<std::size_t>(width) - std::min<std::size_t>(num.size(), width), '0') + num;
    SyntheticRecord r;
    r.findings = sample_findings(rng, spec.dims, spec.spacing);
    r.volume = render(r.findings, spec.dims, spec.spacing, id);
    r.report = report_text(r.findings, spec.style, spec.dims);
    out.push_back(std::move(r));
  }
  return out;
}

Manifest generate_corpus(const CorpusSpec& spec, const std::filesystem::path& out_dir) {
  auto records = generate_records(spec);
  std::vector<ManifestRecord> entries;
  for (const auto& r : records) {
    const std::string rel = "volumes/" + r.volume.id + ".ctvl";
    volume::write_ctvol(r.volume, out_dir / rel);
    entries.push_back({rel, r.report, ""});
  }
  auto manifest = split_manifest(std::move(entries), spec.split_ratios, derive_seed(spec.seed, 0xC0FFEE));
  manifest.save(out_dir / "manifest.jsonl");
  return manifest;
}

}  // namespace ctgpt::synth
