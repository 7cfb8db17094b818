#pragma once

#include <algorithm>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "bivocoder/io/wav.hpp"
#include "bivocoder/numerics/tensor.hpp"

namespace bivocoder::training {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Utterance {
  std::string id;
  std::vector<float> samples;
};

/// Every *.wav directly under `dir`, sorted by file name. Any unreadable or non-conforming file is fatal.
inline std::vector<Utterance> load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw DatasetError("dataset directory not found: " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DatasetError("no training data: no .wav files in " + dir);
  std::vector<Utterance> out;
  for (const auto& f : files) {
    try {
      auto s = io::read_wav(f.string());
      if (s.empty()) throw io::WavError(f.string() + ": no samples");
      out.push_back({f.stem().string(), std::move(s)});
    } catch (const io::WavError& e) {
      throw DatasetError(std::string("bad training file: ") + e.what());
    }
  }
  return out;
}

/// Uniform utterance choice and crop start; short utterances are zero-padded at the end.
inline numerics::Tensor<float> sample_batch(const std::vector<Utterance>& data, std::size_t batch, std::size_t crop,
                                            std::mt19937_64& rng) {
  if (data.empty()) throw DatasetError("no training data");
  numerics::Tensor<float> out({batch, crop});
  for (std::size_t b = 0; b < batch; ++b) {
    const auto& u = data[std::uniform_int_distribution<std::size_t>(0, data.size() - 1)(rng)].samples;
    std::size_t start = 0;
    if (u.size() > crop) start = std::uniform_int_distribution<std::size_t>(0, u.size() - crop)(rng);
    const std::size_t n = std::min(crop, u.size() - start);
    std::copy_n(u.begin() + static_cast<std::ptrdiff_t>(start), n, out.ptr() + b * crop);
  }
  return out;
}

}  // namespace bivocoder::training
