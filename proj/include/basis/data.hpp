#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "basis/models.hpp"

namespace basis {

/// Byte-level corpus. The vocabulary lists distinct bytes in order of first
/// appearance; the first `train_end` encoded positions form the training
/// split and the rest the validation split.
struct CharCorpus {
  std::vector<unsigned char> vocab;
  std::vector<std::int32_t> encoded;
  std::size_t train_end = 0;
  std::string digest;  // SHA-256 of the raw text, hex

  std::size_t vocab_size() const { return vocab.size(); }
  std::vector<std::int32_t> encode(std::string_view text) const;
  std::string decode(std::span<const std::int32_t> ids) const;
};

enum class Split { train, validation };

CharCorpus make_char_corpus(std::string_view text, double split_fraction);
CharCorpus load_char_corpus(const std::filesystem::path& path, double split_fraction);

std::string sha256_hex(std::string_view bytes);

struct BatchSpec {
  std::size_t batch_size = 1;
  std::size_t seq_len = 64;
  std::uint64_t seed = 0;
};

/// Window starts are drawn uniformly from the split using a stream derived
/// from (seed, step, split); targets are the inputs shifted by one.
TokenBatch sample_lm_batch(const CharCorpus& corpus, const BatchSpec& spec, std::uint64_t step,
                           Split split = Split::train);

/// Least-squares problem target = x * w_star + noise.
struct LinearTask {
  Matrix x;
  Matrix w_star;
  Matrix target;
};
LinearTask synth_linear_task(std::size_t batch, std::size_t in, std::size_t out, double noise,
                             std::uint64_t seed);

/// Fills a matrix with i.i.d. standard normal entries.
Matrix random_normal(std::size_t rows, std::size_t cols, Rng& rng, double stddev = 1.0);

}  // namespace basis
