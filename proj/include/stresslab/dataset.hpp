#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "stresslab/catalog.hpp"
#include "stresslab/fem.hpp"
#include "stresslab/parallel.hpp"

namespace stresslab {

/// Arithmetic load-magnitude schedule, inclusive of stop when it lands on a
/// step. "0:100:20" enumerates {0, 20, 40, 60, 80, 100}.
struct QSchedule {
  double start = 0.0, stop = 100.0, step = 20.0;

  std::vector<double> values() const {
    require(step > 0.0 || start == stop, "invalid-parameters",
            "q schedule step must be positive");
    require(start >= 0.0 && stop >= start, "invalid-parameters",
            "q schedule must be non-negative and increasing");
    std::vector<double> v;
    if (step <= 0.0) return {start};
    const int n = static_cast<int>(std::floor((stop - start) / step + 1e-9));
    for (int i = 0; i <= n; ++i) v.push_back(start + step * i);
    return v;
  }

  static QSchedule parse(const std::string& s) {
    QSchedule q;
    if (std::sscanf(s.c_str(), "%lf:%lf:%lf", &q.start, &q.stop, &q.step) != 3)
      fail("invalid-parameters", "q schedule must look like start:stop:step");
    return q;
  }

  std::string str() const {
    std::ostringstream os;
    os << start << ":" << stop << ":" << step;
    return os.str();
  }
};

struct SweepConfig {
  std::string catalog_path;
  QSchedule q_schedule;
  int theta_count = 24;  // angles per full turn, endpoint 2*pi excluded
  Material material;
  uint64_t seed = 0;         // split shuffling
  bool dedup_zero_q = false;  // keep only theta=0 for q=0 rows

  void validate() const {
    require(theta_count >= 1, "invalid-parameters", "need at least one angle");
    material.validate();
  }
};

struct Provenance {
  uint32_t entry_index = 0;
  double q = 0.0;
  double theta = 0.0;
};

/// In-memory dataset. Sample arrays use the file layout: multi-channel
/// inputs [N,5,H,W], single-channel inputs [N,1,H,W], targets [N,H,W], all
/// f32 row-major.
struct Dataset {
  int height = 24, width = 32;
  Material material;
  std::string q_schedule_str;
  int theta_count = 0;
  std::vector<std::string> catalog_ids;

  std::vector<float> multi;
  std::vector<float> single;
  std::vector<float> target;
  std::vector<Provenance> provenance;

  int64_t count() const { return static_cast<int64_t>(provenance.size()); }
  int64_t pixels() const { return static_cast<int64_t>(height) * width; }

  const float* multi_sample(int64_t i) const { return multi.data() + i * 5 * pixels(); }
  const float* single_sample(int64_t i) const { return single.data() + i * pixels(); }
  const float* target_sample(int64_t i) const { return target.data() + i * pixels(); }

  /// Load pair (qx, qy) of sample i, from its provenance record.
  std::pair<double, double> load_pair(int64_t i) const {
    const Provenance& p = provenance[i];
    return {p.q * std::cos(p.theta), p.q * std::sin(p.theta)};
  }
};

struct ProblemRef {
  uint32_t entry_index;
  double q;
  double theta;
};

/// Cartesian product of catalog entries, q values, and angles, in that
/// nesting order. Angles cover [0, 2*pi) so the duplicate endpoint is
/// excluded.
inline std::vector<ProblemRef> enumerate_problems(const GeometryCatalog& cat,
                                                  const SweepConfig& cfg) {
  cfg.validate();
  std::vector<double> qs = cfg.q_schedule.values();
  std::vector<ProblemRef> out;
  out.reserve(cat.size() * qs.size() * cfg.theta_count);
  for (uint32_t e = 0; e < cat.size(); ++e)
    for (double q : qs)
      for (int a = 0; a < cfg.theta_count; ++a) {
        if (cfg.dedup_zero_q && q == 0.0 && a > 0) continue;
        out.push_back({e, q, 2.0 * std::numbers::pi * a / cfg.theta_count});
      }
  return out;
}

inline ProblemSpec make_problem(const CatalogEntry& entry, double q,
                                double theta, const Material& material,
                                const GridSpec& grid = GridSpec{}) {
  ProblemSpec p;
  p.grid = grid;
  p.mask = build_geometry(entry.family, grid);
  p.load = {q, theta};
  p.material = material;
  return p;
}

/// Runs the FEM oracle over the whole sweep. Output is identical for any
/// worker count: sample slots are indexed by enumeration order.
inline Dataset generate_dataset(const GeometryCatalog& cat,
                                const SweepConfig& cfg, int workers = 0) {
  const GridSpec grid;
  std::vector<ProblemRef> problems = enumerate_problems(cat, cfg);
  const int64_t n = static_cast<int64_t>(problems.size());
  const int64_t px = static_cast<int64_t>(grid.height) * grid.width;

  Dataset d;
  d.height = grid.height;
  d.width = grid.width;
  d.material = cfg.material;
  d.q_schedule_str = cfg.q_schedule.str();
  d.theta_count = cfg.theta_count;
  for (const auto& e : cat.entries()) d.catalog_ids.push_back(e.id);
  d.multi.resize(n * 5 * px);
  d.single.resize(n * px);
  d.target.resize(n * px);
  d.provenance.resize(n);

  // Masks and the stiffness pattern depend only on the catalog entry; the
  // sweep revisits each entry many times, so cache the masks up front.
  std::vector<GeometryMask> masks(cat.size());
  for (size_t e = 0; e < cat.size(); ++e)
    masks[e] = build_geometry(cat.entries()[e].family, grid);

  parallel_for(n, resolve_workers(workers), [&](int64_t i) {
    const ProblemRef& ref = problems[i];
    ProblemSpec p;
    p.grid = grid;
    p.mask = masks[ref.entry_index];
    p.load = {ref.q, ref.theta};
    p.material = cfg.material;

    StressField field;
    try {
      field = solve_problem(p);
    } catch (const Error& err) {
      fail(err.code(), "sample " + std::to_string(i) + " (entry '" +
                           cat.entries()[ref.entry_index].id + "', q=" +
                           std::to_string(ref.q) + ", theta=" +
                           std::to_string(ref.theta) + "): " + err.what());
    }
    const ChannelStack stack = rasterize_multi_channel(p);
    const SingleChannelImage img = rasterize_single_channel(p);

    float* mdst = d.multi.data() + i * 5 * px;
    for (int ch = 0; ch < 5; ++ch) {
      const PlaneImage& plane = stack.plane(ch);
      for (int64_t j = 0; j < px; ++j)
        mdst[ch * px + j] = static_cast<float>(plane.pixels[j]);
    }
    float* sdst = d.single.data() + i * px;
    for (int64_t j = 0; j < px; ++j)
      sdst[j] = static_cast<float>(img.pixels[j]);
    float* tdst = d.target.data() + i * px;
    for (int64_t j = 0; j < px; ++j)
      tdst[j] = static_cast<float>(field.values[j]);
    d.provenance[i] = {ref.entry_index, ref.q, ref.theta};
  });
  return d;
}

struct DatasetStats {
  double min = 0.0, max = 0.0, mean = 0.0;
  int64_t solid_pixels = 0;
};

/// Statistics of the target stress over solid pixels of every sample.
inline DatasetStats dataset_stats(const Dataset& d) {
  require(d.count() > 0, "empty-dataset", "dataset has no samples");
  DatasetStats s;
  s.min = std::numeric_limits<double>::infinity();
  s.max = -std::numeric_limits<double>::infinity();
  double acc = 0.0;
  const int64_t px = d.pixels();
  for (int64_t i = 0; i < d.count(); ++i) {
    const float* geo = d.multi_sample(i);  // channel 0
    const float* t = d.target_sample(i);
    for (int64_t j = 0; j < px; ++j) {
      if (geo[j] == 0.0f) continue;
      const double v = t[j];
      s.min = std::min(s.min, v);
      s.max = std::max(s.max, v);
      acc += v;
      ++s.solid_pixels;
    }
  }
  require(s.solid_pixels > 0, "empty-dataset", "dataset has no solid pixels");
  s.mean = acc / static_cast<double>(s.solid_pixels);
  return s;
}

namespace detail {

inline Dataset gather(const Dataset& d, const std::vector<int64_t>& idx) {
  Dataset out;
  out.height = d.height;
  out.width = d.width;
  out.material = d.material;
  out.q_schedule_str = d.q_schedule_str;
  out.theta_count = d.theta_count;
  out.catalog_ids = d.catalog_ids;
  const int64_t px = d.pixels();
  out.multi.resize(idx.size() * 5 * px);
  out.single.resize(idx.size() * px);
  out.target.resize(idx.size() * px);
  out.provenance.resize(idx.size());
  for (size_t k = 0; k < idx.size(); ++k) {
    const int64_t i = idx[k];
    std::copy_n(d.multi_sample(i), 5 * px, out.multi.data() + k * 5 * px);
    std::copy_n(d.single_sample(i), px, out.single.data() + k * px);
    std::copy_n(d.target_sample(i), px, out.target.data() + k * px);
    out.provenance[k] = d.provenance[i];
  }
  return out;
}

}  // namespace detail

/// Deterministic shuffled partition into train/test.
inline std::pair<Dataset, Dataset> split_dataset(const Dataset& d,
                                                 double train_fraction,
                                                 uint64_t seed) {
  require(train_fraction > 0.0 && train_fraction < 1.0, "degenerate-split",
          "train fraction must lie in (0, 1)");
  const int64_t n = d.count();
  std::vector<int64_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const int64_t k = std::llround(train_fraction * static_cast<double>(n));
  require(k > 0 && k < n, "degenerate-split",
          "split would leave one side empty");
  std::vector<int64_t> train_idx(idx.begin(), idx.begin() + k);
  std::vector<int64_t> test_idx(idx.begin() + k, idx.end());
  return {detail::gather(d, train_idx), detail::gather(d, test_idx)};
}

// ---------------------------------------------------------------------------
// SFD1 container: magic "SFD1" | header length u32 LE | UTF-8 key/value
// header | payloads in the header's field order. Floats are f32 LE.
// Provenance records are (u32 entry index, f64 q, f64 theta) LE.
// ---------------------------------------------------------------------------

namespace detail {

constexpr char kDatasetMagic[4] = {'S', 'F', 'D', '1'};
constexpr uint32_t kDatasetVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::istream& in, T& v, const char* what) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (in.gcount() != sizeof(T)) fail("truncated-payload", what);
}

}  // namespace detail

inline void write_dataset(const Dataset& d, const std::string& path) {
  std::ostringstream hdr;
  hdr << "version=" << detail::kDatasetVersion << "\n"
      << "count=" << d.count() << "\n"
      << "height=" << d.height << "\n"
      << "width=" << d.width << "\n"
      << "material_e=" << d.material.youngs_modulus << "\n"
      << "material_nu=" << d.material.poisson_ratio << "\n"
      << "q_schedule=" << d.q_schedule_str << "\n"
      << "theta_count=" << d.theta_count << "\n";
  hdr << "catalog_ids=";
  for (size_t i = 0; i < d.catalog_ids.size(); ++i)
    hdr << (i ? "," : "") << d.catalog_ids[i];
  hdr << "\n";
  hdr << "fields=multi,single,target,provenance\n";
  const std::string header = hdr.str();

  std::ofstream out(path, std::ios::binary);
  if (!out) fail("io-error", "cannot open '" + path + "' for writing");
  out.write(detail::kDatasetMagic, 4);
  detail::write_pod(out, static_cast<uint32_t>(header.size()));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(d.multi.data()),
            static_cast<std::streamsize>(d.multi.size() * sizeof(float)));
  out.write(reinterpret_cast<const char*>(d.single.data()),
            static_cast<std::streamsize>(d.single.size() * sizeof(float)));
  out.write(reinterpret_cast<const char*>(d.target.data()),
            static_cast<std::streamsize>(d.target.size() * sizeof(float)));
  for (const Provenance& p : d.provenance) {
    detail::write_pod(out, p.entry_index);
    detail::write_pod(out, p.q);
    detail::write_pod(out, p.theta);
  }
  if (!out) fail("io-error", "short write to '" + path + "'");
}

inline Dataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("io-error", "cannot open '" + path + "'");

  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, detail::kDatasetMagic, 4) != 0)
    fail("bad-magic", "'" + path + "' is not a dataset file");
  uint32_t hlen = 0;
  detail::read_pod(in, hlen, "dataset header length");
  std::string header(hlen, '\0');
  in.read(header.data(), hlen);
  if (static_cast<uint32_t>(in.gcount()) != hlen)
    fail("truncated-payload", "dataset header");

  Dataset d;
  int64_t count = -1;
  uint32_t version = 0;
  std::string fields;
  std::istringstream lines(header);
  std::string line;
  while (std::getline(lines, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "version") version = std::stoul(value);
    else if (key == "count") count = std::stoll(value);
    else if (key == "height") d.height = std::stoi(value);
    else if (key == "width") d.width = std::stoi(value);
    else if (key == "material_e") d.material.youngs_modulus = std::stod(value);
    else if (key == "material_nu") d.material.poisson_ratio = std::stod(value);
    else if (key == "q_schedule") d.q_schedule_str = value;
    else if (key == "theta_count") d.theta_count = std::stoi(value);
    else if (key == "fields") fields = value;
    else if (key == "catalog_ids") {
      std::istringstream ids(value);
      std::string id;
      while (std::getline(ids, id, ',')) d.catalog_ids.push_back(id);
    }
  }
  if (version != detail::kDatasetVersion)
    fail("version-mismatch", "dataset version " + std::to_string(version) +
                                 " is not supported");
  require(count >= 0 && d.height > 0 && d.width > 0, "truncated-payload",
          "dataset header is incomplete");
  require(fields == "multi,single,target,provenance", "version-mismatch",
          "unexpected dataset field order '" + fields + "'");

  const int64_t px = static_cast<int64_t>(d.height) * d.width;
  auto read_block = [&](std::vector<float>& dst, int64_t n, const char* what) {
    dst.resize(n);
    in.read(reinterpret_cast<char*>(dst.data()),
            static_cast<std::streamsize>(n * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(n * sizeof(float)))
      fail("truncated-payload", what);
  };
  read_block(d.multi, count * 5 * px, "multi-channel payload");
  read_block(d.single, count * px, "single-channel payload");
  read_block(d.target, count * px, "target payload");
  d.provenance.resize(count);
  for (int64_t i = 0; i < count; ++i) {
    detail::read_pod(in, d.provenance[i].entry_index, "provenance payload");
    detail::read_pod(in, d.provenance[i].q, "provenance payload");
    detail::read_pod(in, d.provenance[i].theta, "provenance payload");
  }
  return d;
}

/// Spot-checks that stored targets match a fresh FEM solve of their
/// provenance records. Used by verification modes and tests.
inline void verify_targets(const Dataset& d, const GeometryCatalog& cat,
                           int64_t sample_count, uint64_t seed,
                           double tolerance = 1e-5) {
  require(d.count() > 0, "empty-dataset", "dataset has no samples");
  std::mt19937_64 rng(seed);
  const int64_t px = d.pixels();
  for (int64_t k = 0; k < sample_count; ++k) {
    const int64_t i = static_cast<int64_t>(rng() % static_cast<uint64_t>(d.count()));
    const Provenance& p = d.provenance[i];
    require(p.entry_index < cat.size(), "invalid-parameters",
            "provenance entry index out of range");
    ProblemSpec spec = make_problem(cat.entries()[p.entry_index], p.q, p.theta,
                                    d.material);
    StressField f = solve_problem(spec);
    const float* t = d.target_sample(i);
    for (int64_t j = 0; j < px; ++j) {
      const double want = static_cast<float>(f.values[j]);
      require(std::abs(want - t[j]) <=
                  tolerance * std::max(1.0, std::abs(want)),
              "invalid-parameters",
              "stored target diverges from the FEM solve at sample " +
                  std::to_string(i));
    }
  }
}

}  // namespace stresslab
