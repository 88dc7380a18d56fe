#include "uhal/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

#include "json.hpp"
#include "uhal/core/error.hpp"
#include "uhal/core/rng.hpp"
#include "uhal/data/image_io.hpp"

namespace uhal::data {

namespace fs = std::filesystem;

namespace {

bool is_image(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::map<std::string, fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::map<std::string, fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && is_image(e.path())) out.emplace(e.path().filename().string(), e.path());
  }
  return out;
}

train::PairedSample load_one(const std::string& id, const fs::path& a, const fs::path& h, const std::string& modality) {
  train::PairedSample s;
  s.id = id;
  s.modality = modality;
  s.x = read_image(a);
  s.y = read_image(h);
  if (s.x.shape() != s.y.shape()) {
    throw DataError("size mismatch for '" + id + "': " + a.string() + " is " + core::shape_str(s.x.shape()) + ", " +
                    h.string() + " is " + core::shape_str(s.y.shape()));
  }
  return s;
}

}  // namespace

PairedDataset load_pairs(const fs::path& authentic_dir, const fs::path& hallucinated_dir, const std::string& modality) {
  const auto a = list_images(authentic_dir);
  const auto h = list_images(hallucinated_dir);
  std::vector<std::string> unmatched;
  for (const auto& [name, p] : a) {
    if (!h.count(name)) unmatched.push_back(p.string());
  }
  for (const auto& [name, p] : h) {
    if (!a.count(name)) unmatched.push_back(p.string());
  }
  if (!unmatched.empty()) {
    std::string msg = "files without a counterpart:";
    for (const auto& u : unmatched) msg += " " + u;
    throw DataError(msg);
  }
  PairedDataset ds;
  ds.modality = modality;
  for (const auto& [name, p] : a) ds.pairs.push_back(load_one(fs::path(name).stem().string(), p, h.at(name), modality));
  return ds;
}

PairedDataset load_manifest(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw DataError("cannot open manifest " + manifest.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest " + manifest.string() + ": " + e.what());
  }
  const fs::path base = manifest.parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  PairedDataset ds;
  try {
    ds.modality = j.value("modality", std::string("custom"));
    for (const auto& e : j.at("pairs")) {
      const std::string id = e.at("id").get<std::string>();
      const std::string mod = e.value("modality", ds.modality);
      ds.pairs.push_back(load_one(id, resolve(e.at("authentic").get<std::string>()),
                                  resolve(e.at("hallucinated").get<std::string>()), mod));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest " + manifest.string() + ": " + e.what());
  }
  return ds;
}

void save_pairs(const PairedDataset& ds, const fs::path& authentic_dir, const fs::path& hallucinated_dir) {
  fs::create_directories(authentic_dir);
  fs::create_directories(hallucinated_dir);
  for (const auto& p : ds.pairs) {
    write_png(authentic_dir / (p.id + ".png"), p.x);
    write_png(hallucinated_dir / (p.id + ".png"), p.y);
  }
}

SplitIndices make_split(std::size_t n, const std::array<double, 3>& ratios, std::uint64_t seed) {
  if (n == 0) throw DataError("split: dataset is empty");
  for (double r : ratios) {
    if (!(r >= 0.0)) throw DataError("split: ratios must be non-negative");
  }
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) throw DataError("split: ratios must sum to 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const core::CounterRng rng = core::CounterRng(seed).split(0x53504c);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i, i)]);
  const auto nv = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios[1] + 1e-9));
  const auto nt = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios[2] + 1e-9));
  SplitIndices s;
  s.val.assign(order.begin(), order.begin() + nv);
  s.test.assign(order.begin() + nv, order.begin() + nv + nt);
  s.train.assign(order.begin() + nv + nt, order.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

void split(PairedDataset& ds, const std::array<double, 3>& ratios, std::uint64_t seed) {
  auto s = make_split(ds.pairs.size(), ratios, seed);
  ds.train = std::move(s.train);
  ds.val = std::move(s.val);
  ds.test = std::move(s.test);
}

PairedDataset synth_dataset(std::size_t n, std::size_t height, std::size_t width, SynthHallucinationParams params,
                            std::uint64_t seed) {
  PairedDataset ds;
  ds.modality = "surrogate_" + to_string(params.mode);
  const core::CounterRng root(seed);
  for (std::size_t i = 0; i < n; ++i) {
    train::PairedSample s;
    char id[32];
    std::snprintf(id, sizeof(id), "synth_%04zu", i);
    s.id = id;
    s.modality = ds.modality;
    s.x = procedural_image(height, width, root.split(2 * i).key());
    SynthHallucinationParams p = params;
    p.seed = root.split(2 * i + 1).key();
    s.y = synth_hallucinate(s.x, p);
    ds.pairs.push_back(std::move(s));
  }
  return ds;
}

std::vector<train::PairedSample> select(const PairedDataset& ds, const std::vector<std::size_t>& idx) {
  std::vector<train::PairedSample> out;
  for (std::size_t i : idx) out.push_back(ds.pairs.at(i));
  return out;
}

}  // namespace uhal::data
