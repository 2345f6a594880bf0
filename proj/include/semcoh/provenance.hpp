#pragma once

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <fstream>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "semcoh/corpus.hpp"
#include "semcoh/errors.hpp"

namespace semcoh {

inline constexpr std::string_view kToolName = "semcoh";
inline constexpr std::string_view kToolVersion = "0.1.0";

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), &EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
      throw Error(ErrorCode::io, "sha256 init failed");
    }
  }

  void update(std::string_view bytes) { EVP_DigestUpdate(ctx_.get(), bytes.data(), bytes.size()); }

  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_.get(), md.data(), &len);
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
      out.push_back(kDigits[md[i] >> 4]);
      out.push_back(kDigits[md[i] & 15]);
    }
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

inline std::string sha256_hex(std::string_view bytes) {
  Sha256 h;
  h.update(bytes);
  return h.hex();
}

inline std::string sha256_file(const fs::path& path) {
  auto in = detail::open_input(path, std::ios::binary);
  Sha256 h;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h.update(std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())));
  }
  return h.hex();
}

/// Writes `<artifact>.meta.json` next to an output: tool version, command,
/// seed and the digest of every input file.
inline void write_provenance(const fs::path& artifact, std::string_view command, std::uint64_t seed,
                             const std::vector<fs::path>& inputs, const json& extra = json::object()) {
  json meta{{"tool", kToolName},
            {"version", kToolVersion},
            {"command", command},
            {"seed", seed},
            {"artifact_sha256", sha256_file(artifact)}};
  meta["inputs"] = json::array();
  for (const auto& in : inputs) {
    meta["inputs"].push_back({{"path", in.generic_string()}, {"sha256", sha256_file(in)}});
  }
  if (!extra.empty()) meta["extra"] = extra;
  auto out = detail::open_output(fs::path(artifact.string() + ".meta.json"));
  out << meta.dump(2) << '\n';
}

}  // namespace semcoh
