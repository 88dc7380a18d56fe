#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "uhal/data/synth.hpp"
#include "uhal/train/sample.hpp"

namespace uhal::data {

struct PairedDataset {
  std::vector<train::PairedSample> pairs;
  std::string modality = "custom";
  std::vector<std::size_t> train, val, test;
};

// Same-named PNG/JPEG files from two directories, in lexicographic order.
// Unmatched files and size mismatches throw DataError naming the files.
PairedDataset load_pairs(const std::filesystem::path& authentic_dir, const std::filesystem::path& hallucinated_dir,
                         const std::string& modality = "custom");

// {"modality": str, "pairs": [{"id", "authentic", "hallucinated", "modality"?}]}
// Relative paths resolve against the manifest's directory.
PairedDataset load_manifest(const std::filesystem::path& manifest);

// Writes <dir>/<id>.png for both halves of every pair.
void save_pairs(const PairedDataset& ds, const std::filesystem::path& authentic_dir,
                const std::filesystem::path& hallucinated_dir);

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

// ratios = (train, val, test), summing to 1 within 1e-9. val and test get
// floor(n * ratio) entries; the remainder goes to train.
SplitIndices make_split(std::size_t n, const std::array<double, 3>& ratios, std::uint64_t seed);
void split(PairedDataset& ds, const std::array<double, 3>& ratios, std::uint64_t seed);

// n procedural pairs of the given size; image i uses seeds derived from (seed, i).
PairedDataset synth_dataset(std::size_t n, std::size_t height, std::size_t width, SynthHallucinationParams params,
                            std::uint64_t seed);

std::vector<train::PairedSample> select(const PairedDataset& ds, const std::vector<std::size_t>& idx);

}  // namespace uhal::data
