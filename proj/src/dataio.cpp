#include "affect/dataio.hpp"

#include "affect/format.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

namespace affect {

namespace {

using json = nlohmann::json;

constexpr int kFixedColumns = 4 + kNumLogits;  // video_id, frame, valence, arousal, l0..l7

std::string expected_columns(std::size_t dim) {
  return "video_id,frame,valence,arousal,l0..l7,e0..e" + std::to_string(dim - 1);
}

json logit_order_json() {
  json order = json::array();
  for (auto name : kLogitNames) order.push_back(std::string(name));
  return order;
}

std::size_t parse_header(const std::string& line, const std::string& source) {
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw DataError(source, 1, std::string("malformed header: ") + e.what());
  }
  if (!header.is_object()) throw DataError(source, 1, "malformed header: not a JSON object");
  if (header.value("version", 0) != 1) throw DataError(source, 1, "unsupported feature file version");
  if (!header.contains("D") || !header["D"].is_number_integer() || header["D"].get<long long>() <= 0)
    throw DataError(source, 1, "malformed header: D must be a positive integer");
  const auto dim = header["D"].get<std::size_t>();
  if (header.contains("logit_order") && header["logit_order"] != logit_order_json())
    throw DataError(source, 1, "malformed header: unexpected logit_order");
  if (header.contains("columns") && header["columns"] != expected_columns(dim))
    throw DataError(source, 1, "malformed header: columns do not match D");
  return dim;
}

double real_field(std::string_view text, const std::string& source, std::size_t line, const char* what) {
  auto v = parse_double(text);
  if (!v || !std::isfinite(*v))
    throw DataError(source, line, std::string("non-numeric ") + what + " '" + std::string(text) + "'");
  return *v;
}

template <class Gen>
double normal(Gen& gen) {
  return std::normal_distribution<double>(0.0, 1.0)(gen);
}

}  // namespace

std::string_view to_string(Task task) {
  switch (task) {
    case Task::VA: return "va";
    case Task::EXPR: return "expr";
    case Task::AU: return "au";
  }
  return "?";
}

Task parse_task(std::string_view name) {
  if (name == "va" || name == "VA") return Task::VA;
  if (name == "expr" || name == "EXPR") return Task::EXPR;
  if (name == "au" || name == "AU") return Task::AU;
  throw ConfigError("unknown task '" + std::string(name) + "' (expected va, expr or au)");
}

std::size_t Dataset::num_frames() const {
  std::size_t n = 0;
  for (const auto& t : tracks) n += t.frames.size();
  return n;
}

const VideoTrack* Dataset::find(const std::string& video_id) const {
  auto it = std::lower_bound(tracks.begin(), tracks.end(), video_id,
                             [](const VideoTrack& t, const std::string& id) { return t.video_id < id; });
  return (it != tracks.end() && it->video_id == video_id) ? &*it : nullptr;
}

// ---------------------------------------------------------------------------
// Feature files

Dataset read_features(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw DataError(source, 1, "malformed header: file is empty");
  strip_cr(line);

  Dataset dataset;
  dataset.dim = parse_header(line, source);
  const std::size_t expected_fields = kFixedColumns + dataset.dim;

  std::map<std::string, std::vector<FrameFeatures>> by_video;
  std::set<std::pair<std::string, std::int64_t>> seen;
  std::vector<std::string_view> fields;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    split_csv(line, fields);
    if (fields.size() != expected_fields) {
      throw DataError(source, line_no,
                      "dimension mismatch: expected " + std::to_string(expected_fields) + " fields (D=" +
                          std::to_string(dataset.dim) + "), got " + std::to_string(fields.size()));
    }
    std::string video_id(fields[0]);
    if (video_id.empty()) throw DataError(source, line_no, "empty video_id");
    auto frame = parse_int(fields[1]);
    if (!frame || *frame < 0) throw DataError(source, line_no, "non-numeric or negative frame index");
    if (!seen.emplace(video_id, *frame).second)
      throw DataError(source, line_no, "duplicate frame " + video_id + "/" + std::to_string(*frame));

    FrameFeatures f;
    f.frame_index = *frame;
    f.valence = real_field(fields[2], source, line_no, "valence");
    f.arousal = real_field(fields[3], source, line_no, "arousal");
    if (std::abs(f.valence) > 1.0 || std::abs(f.arousal) > 1.0)
      throw DataError(source, line_no, "valence/arousal outside [-1, 1]");
    for (int i = 0; i < kNumLogits; ++i) f.logits[i] = real_field(fields[4 + i], source, line_no, "logit");
    f.embedding.resize(dataset.dim);
    for (std::size_t i = 0; i < dataset.dim; ++i)
      f.embedding[i] = real_field(fields[kFixedColumns + i], source, line_no, "embedding value");
    by_video[video_id].push_back(std::move(f));
  }

  dataset.tracks.reserve(by_video.size());
  for (auto& [id, frames] : by_video) {
    std::sort(frames.begin(), frames.end(),
              [](const FrameFeatures& a, const FrameFeatures& b) { return a.frame_index < b.frame_index; });
    dataset.tracks.push_back({id, std::move(frames)});
  }
  return dataset;
}

Dataset load_features(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open feature file " + path.string());
  return read_features(in, path.string());
}

void write_features(const Dataset& dataset, std::ostream& out) {
  json header;
  header["version"] = 1;
  header["D"] = dataset.dim;
  header["logit_order"] = logit_order_json();
  header["columns"] = expected_columns(dataset.dim);
  out << header.dump() << '\n';

  std::string row;
  for (const auto& track : dataset.tracks) {
    for (const auto& f : track.frames) {
      if (f.embedding.size() != dataset.dim)
        throw DataError("frame " + track.video_id + "/" + std::to_string(f.frame_index) +
                        " has embedding length " + std::to_string(f.embedding.size()) + ", expected " +
                        std::to_string(dataset.dim));
      row = track.video_id;
      row += ',';
      row += std::to_string(f.frame_index);
      row += ',';
      row += format_feature(f.valence);
      row += ',';
      row += format_feature(f.arousal);
      for (double l : f.logits) {
        row += ',';
        row += format_feature(l);
      }
      for (double e : f.embedding) {
        row += ',';
        row += format_feature(e);
      }
      out << row << '\n';
    }
  }
}

void write_features(const Dataset& dataset, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write feature file " + path.string());
  write_features(dataset, out);
}

// ---------------------------------------------------------------------------
// Label files

TaskLabels parse_labels(std::istream& in, Task task, const std::string& source) {
  TaskLabels labels;
  labels.task = task;
  std::string line;
  std::vector<std::string_view> fields;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    split_csv(line, fields);
    switch (task) {
      case Task::VA: {
        if (fields.size() != 2) throw DataError(source, line_no, "VA line must hold 2 values");
        std::array<double, 2> va{};
        bool invalid = false;
        for (int i = 0; i < 2; ++i) {
          va[i] = real_field(fields[i], source, line_no, "VA value");
          if (va[i] == kVaInvalid) {
            invalid = true;
          } else if (std::abs(va[i]) > 1.0) {
            throw DataError(source, line_no, "VA value outside [-1, 1] and not the sentinel");
          }
        }
        labels.va.push_back(va);
        labels.invalid.push_back(invalid);
        break;
      }
      case Task::EXPR: {
        if (fields.size() != 1) throw DataError(source, line_no, "EXPR line must hold one class id");
        auto id = parse_int(fields[0]);
        if (!id || *id < kClassInvalid || *id >= kNumExprClasses)
          throw DataError(source, line_no, "unknown class id '" + std::string(fields[0]) + "'");
        labels.expr.push_back(static_cast<int>(*id));
        labels.invalid.push_back(*id == kClassInvalid);
        break;
      }
      case Task::AU: {
        if (fields.size() != kNumActionUnits)
          throw DataError(source, line_no,
                          "AU line has " + std::to_string(fields.size()) + " entries, expected 12");
        AuBits bits{};
        bool invalid = false;
        for (int u = 0; u < kNumActionUnits; ++u) {
          auto v = parse_int(fields[u]);
          if (!v || (*v != 0 && *v != 1 && *v != kClassInvalid))
            throw DataError(source, line_no, "AU entry must be 0, 1 or -1");
          if (*v == kClassInvalid) invalid = true;
          bits[u] = *v == 1 ? 1 : 0;
        }
        labels.au.push_back(bits);
        labels.invalid.push_back(invalid);
        break;
      }
    }
  }
  return labels;
}

LabelMap load_labels(const std::filesystem::path& dir, Task task) {
  if (!std::filesystem::is_directory(dir)) throw DataError("label directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".txt") files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  LabelMap labels;
  for (const auto& file : files) {
    std::ifstream in(file);
    if (!in) throw DataError("cannot open label file " + file.string());
    labels.emplace(file.stem().string(), parse_labels(in, task, file.string()));
  }
  return labels;
}

void write_labels(const LabelMap& labels, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& [id, l] : labels) {
    std::ofstream out(dir / (id + ".txt"), std::ios::binary);
    if (!out) throw DataError("cannot write label file for " + id);
    for (std::size_t i = 0; i < l.size(); ++i) {
      switch (l.task) {
        case Task::VA:
          if (l.invalid[i])
            out << "-5.0,-5.0\n";
          else
            out << format_real(l.va[i][0]) << ',' << format_real(l.va[i][1]) << '\n';
          break;
        case Task::EXPR:
          out << (l.invalid[i] ? kClassInvalid : l.expr[i]) << '\n';
          break;
        case Task::AU:
          for (int u = 0; u < kNumActionUnits; ++u) {
            if (u) out << ',';
            out << (l.invalid[i] ? kClassInvalid : int(l.au[i][u]));
          }
          out << '\n';
          break;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Alignment

AlignedSet align(const Dataset& dataset, const LabelMap& labels, Task task) {
  std::vector<std::string> unknown;
  for (const auto& [id, l] : labels) {
    if (l.task != task) throw DataError("labels for " + id + " belong to task " + std::string(to_string(l.task)));
    if (!dataset.find(id)) unknown.push_back(id);
  }
  if (!unknown.empty()) {
    std::string msg = "labels reference videos absent from features:";
    for (const auto& id : unknown) msg += " " + id;
    throw DataError(msg);
  }

  AlignedSet out;
  out.task = task;
  for (std::size_t t = 0; t < dataset.tracks.size(); ++t) {
    const auto& track = dataset.tracks[t];
    auto it = labels.find(track.video_id);
    if (it == labels.end()) continue;
    const TaskLabels& l = it->second;
    // Both sides are sorted by frame index, so one merge pass suffices.
    std::size_t pos = 0;
    for (std::size_t i = 0; i < l.size(); ++i) {
      if (l.invalid[i]) continue;
      const auto frame = static_cast<std::int64_t>(i);
      while (pos < track.frames.size() && track.frames[pos].frame_index < frame) ++pos;
      if (pos == track.frames.size() || track.frames[pos].frame_index != frame) {
        ++out.skipped;
        continue;
      }
      out.frames.push_back({t, pos});
      switch (task) {
        case Task::VA: out.va.push_back(l.va[i]); break;
        case Task::EXPR: out.expr.push_back(l.expr[i]); break;
        case Task::AU: out.au.push_back(l.au[i]); break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic data

namespace {

constexpr int kLatentDim = 4;
constexpr double kLatentScale = 0.35;
constexpr double kNeutralRadius = 0.2;
constexpr double kLogitGain = 1.0;
constexpr std::uint64_t kFeatureMapSeed = 0x5eed'f00d'2023'0005ULL;

// Challenge class of each angular sector of the (valence, arousal) plane,
// counter-clockwise from the positive valence axis.
constexpr int kSectorClass[7] = {4, 6, 3, 1, 2, 5, 7};
// Logit index (backbone order) -> challenge class it points at.
constexpr int kLogitTarget[kNumLogits] = {1, 7, 2, 3, 4, 0, 5, 6};

using Latent = std::array<double, kLatentDim>;

std::vector<Latent> simulate_latent(std::mt19937_64& gen, int frames) {
  const double innovation = kLatentScale * std::sqrt(1.0 - kLatentAutoregression * kLatentAutoregression);
  std::vector<Latent> z(frames);
  for (int d = 0; d < kLatentDim; ++d) z[0][d] = kLatentScale * normal(gen);
  for (int t = 1; t < frames; ++t)
    for (int d = 0; d < kLatentDim; ++d) z[t][d] = kLatentAutoregression * z[t - 1][d] + innovation * normal(gen);
  return z;
}

double sector_angle(int sector) { return (sector + 0.5) * 2.0 * std::numbers::pi / 7.0; }

int expression_class(const Latent& z) {
  const double r = std::hypot(z[0], z[1]);
  if (r < kNeutralRadius) return 0;
  double theta = std::atan2(z[1], z[0]);
  if (theta < 0) theta += 2.0 * std::numbers::pi;
  const int sector = std::min(6, static_cast<int>(theta / (2.0 * std::numbers::pi / 7.0)));
  return kSectorClass[sector];
}

struct FeatureMap {
  Matrix embedding;  // D x latent
  Vector embedding_bias;
  std::array<std::array<double, 2>, kNumLogits> logit_dir{};
  std::array<double, kNumLogits> logit_bias{};
  std::array<Latent, kNumActionUnits> au_dir{};
  std::array<double, kNumActionUnits> au_offset{};

  explicit FeatureMap(std::size_t dim) : embedding(dim, kLatentDim), embedding_bias(dim) {
    std::mt19937_64 gen(kFeatureMapSeed);
    for (Eigen::Index i = 0; i < embedding.size(); ++i) embedding.data()[i] = normal(gen);
    for (Eigen::Index i = 0; i < embedding_bias.size(); ++i) embedding_bias[i] = 0.1 * normal(gen);
    for (int l = 0; l < kNumLogits; ++l) {
      const int target = kLogitTarget[l];
      if (target == 0) {
        logit_bias[l] = kLogitGain * kNeutralRadius;
        continue;
      }
      const int sector = static_cast<int>(std::find(std::begin(kSectorClass), std::end(kSectorClass), target) -
                                          std::begin(kSectorClass));
      logit_dir[l] = {kLogitGain * std::cos(sector_angle(sector)), kLogitGain * std::sin(sector_angle(sector))};
    }
    for (int u = 0; u < kNumActionUnits; ++u) {
      double norm = 0.0;
      for (auto& a : au_dir[u]) {
        a = normal(gen);
        norm += a * a;
      }
      for (auto& a : au_dir[u]) a /= std::sqrt(norm);
      au_offset[u] = kLatentScale * std::uniform_real_distribution<double>(-0.2, 1.0)(gen);
    }
  }
};

}  // namespace

std::vector<double> synthetic_latent_valence(int frames, std::uint64_t seed) {
  if (frames < 1) throw ConfigError("frames must be >= 1");
  std::mt19937_64 gen(seed);
  auto z = simulate_latent(gen, frames);
  std::vector<double> v(frames);
  for (int t = 0; t < frames; ++t) v[t] = z[t][0];
  return v;
}

SyntheticData generate_synthetic(const SyntheticOptions& opt) {
  if (opt.n_videos < 1) throw ConfigError("n_videos must be >= 1");
  if (opt.frames_per_video < 1) throw ConfigError("frames_per_video must be >= 1");
  if (!(opt.noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
  if (opt.embedding_dim < 1) throw ConfigError("embedding_dim must be >= 1");

  const FeatureMap map(opt.embedding_dim);
  std::mt19937_64 gen(opt.seed);
  SyntheticData out;
  out.dataset.dim = opt.embedding_dim;

  for (int v = 0; v < opt.n_videos; ++v) {
    char id[32];
    std::snprintf(id, sizeof id, "video_%04d", v);
    const auto z = simulate_latent(gen, opt.frames_per_video);

    VideoTrack track{id, {}};
    TaskLabels labels;
    labels.task = opt.task;
    for (int t = 0; t < opt.frames_per_video; ++t) {
      const Latent& s = z[t];
      FrameFeatures f;
      f.frame_index = t;
      f.valence = round_feature(std::clamp(s[0] + opt.noise_sigma * normal(gen), -1.0, 1.0));
      f.arousal = round_feature(std::clamp(s[1] + opt.noise_sigma * normal(gen), -1.0, 1.0));
      for (int l = 0; l < kNumLogits; ++l)
        f.logits[l] = round_feature(map.logit_bias[l] + map.logit_dir[l][0] * s[0] + map.logit_dir[l][1] * s[1] +
                                    opt.noise_sigma * normal(gen));
      f.embedding.resize(opt.embedding_dim);
      for (std::size_t e = 0; e < opt.embedding_dim; ++e) {
        double x = map.embedding_bias[e];
        for (int d = 0; d < kLatentDim; ++d) x += map.embedding(e, d) * s[d];
        f.embedding[e] = round_feature(x + opt.noise_sigma * normal(gen));
      }
      track.frames.push_back(std::move(f));

      labels.invalid.push_back(0);
      switch (opt.task) {
        case Task::VA:
          labels.va.push_back({std::clamp(s[0], -1.0, 1.0), std::clamp(s[1], -1.0, 1.0)});
          break;
        case Task::EXPR: labels.expr.push_back(expression_class(s)); break;
        case Task::AU: {
          AuBits bits{};
          for (int u = 0; u < kNumActionUnits; ++u) {
            double a = -map.au_offset[u];
            for (int d = 0; d < kLatentDim; ++d) a += map.au_dir[u][d] * s[d];
            bits[u] = a > 0.0 ? 1 : 0;
          }
          labels.au.push_back(bits);
          break;
        }
      }
    }
    out.labels.emplace(track.video_id, std::move(labels));
    out.dataset.tracks.push_back(std::move(track));
  }
  return out;
}

}  // namespace affect
