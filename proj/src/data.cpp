#include "basis/data.hpp"

#include <openssl/evp.h>

#include <array>
#include <cmath>
#include <fstream>
#include <iterator>
#include <memory>

namespace basis {

std::vector<std::int32_t> CharCorpus::encode(std::string_view text) const {
  std::array<std::int32_t, 256> index;
  index.fill(-1);
  for (std::size_t i = 0; i < vocab.size(); ++i) index[vocab[i]] = static_cast<std::int32_t>(i);
  std::vector<std::int32_t> ids;
  ids.reserve(text.size());
  for (unsigned char c : text) {
    if (index[c] < 0) throw DataError("character " + std::to_string(int(c)) + " not in vocabulary");
    ids.push_back(index[c]);
  }
  return ids;
}

std::string CharCorpus::decode(std::span<const std::int32_t> ids) const {
  std::string out;
  out.reserve(ids.size());
  for (auto id : ids) {
    if (id < 0 || std::size_t(id) >= vocab.size()) throw DataError("token id out of range");
    out.push_back(static_cast<char>(vocab[std::size_t(id)]));
  }
  return out;
}

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), md.data(), &len) != 1) {
    throw DataError("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xf]);
  }
  return out;
}

CharCorpus make_char_corpus(std::string_view text, double split_fraction) {
  if (text.empty()) throw DataError("corpus is empty");
  if (!(split_fraction > 0.0 && split_fraction <= 1.0)) {
    throw DataError("split fraction must lie in (0, 1]");
  }
  CharCorpus corpus;
  std::array<bool, 256> seen{};
  for (unsigned char c : text) {
    if (!seen[c]) {
      seen[c] = true;
      corpus.vocab.push_back(c);
    }
  }
  corpus.encoded = corpus.encode(text);
  corpus.train_end = static_cast<std::size_t>(std::llround(split_fraction * double(text.size())));
  corpus.digest = sha256_hex(text);
  return corpus;
}

CharCorpus load_char_corpus(const std::filesystem::path& path, double split_fraction) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read corpus file " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (text.empty()) throw DataError("corpus file " + path.string() + " is empty");
  return make_char_corpus(text, split_fraction);
}

TokenBatch sample_lm_batch(const CharCorpus& corpus, const BatchSpec& spec, std::uint64_t step,
                           Split split) {
  const std::size_t begin = split == Split::train ? 0 : corpus.train_end;
  const std::size_t end = split == Split::train ? corpus.train_end : corpus.encoded.size();
  const std::size_t length = end - begin;
  if (spec.batch_size == 0 || spec.seq_len == 0) throw DataError("batch size and seq_len must be positive");
  if (length < spec.seq_len + 1) {
    throw DataError(std::string(split == Split::train ? "training" : "validation") + " split has " +
                    std::to_string(length) + " tokens, fewer than seq_len + 1 = " +
                    std::to_string(spec.seq_len + 1));
  }
  const std::uint64_t starts = length - spec.seq_len;
  Rng rng(derive_seed(spec.seed, {step, split == Split::train ? 0u : 1u}));
  TokenBatch batch;
  batch.batch = spec.batch_size;
  batch.seq_len = spec.seq_len;
  batch.inputs.reserve(batch.tokens());
  batch.targets.reserve(batch.tokens());
  for (std::size_t b = 0; b < spec.batch_size; ++b) {
    const std::size_t start = begin + static_cast<std::size_t>(rng.below(starts));
    for (std::size_t t = 0; t < spec.seq_len; ++t) {
      batch.inputs.push_back(corpus.encoded[start + t]);
      batch.targets.push_back(corpus.encoded[start + t + 1]);
    }
  }
  return batch;
}

Matrix random_normal(std::size_t rows, std::size_t cols, Rng& rng, double stddev) {
  Matrix m(rows, cols);
  for (Real& v : m.values()) v = static_cast<Real>(rng.normal() * stddev);
  return m;
}

LinearTask synth_linear_task(std::size_t batch, std::size_t in, std::size_t out, double noise,
                             std::uint64_t seed) {
  Rng rng(seed);
  LinearTask task;
  task.x = random_normal(batch, in, rng);
  task.w_star = random_normal(in, out, rng, 1.0 / std::sqrt(double(in)));
  task.target = matmul(task.x, task.w_star);
  if (noise > 0) {
    for (Real& v : task.target.values()) v += static_cast<Real>(noise * rng.normal());
  }
  return task;
}

}  // namespace basis
