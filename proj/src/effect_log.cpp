#include "arsls/effect_log.hpp"

#include <openssl/evp.h>

#include <stdexcept>

namespace arsls {

struct Sha256::Ctx {
  EVP_MD_CTX* md = nullptr;
  Ctx() : md(EVP_MD_CTX_new()) {
    if (md == nullptr || EVP_DigestInit_ex(md, EVP_sha256(), nullptr) != 1) {
      throw std::runtime_error("SHA-256 init failed");
    }
  }
  ~Ctx() { EVP_MD_CTX_free(md); }
  Ctx(const Ctx&) = delete;
  Ctx& operator=(const Ctx&) = delete;
};

Sha256::Sha256() : ctx_(std::make_unique<Ctx>()) {}
Sha256::~Sha256() = default;
Sha256::Sha256(Sha256&&) noexcept = default;
Sha256& Sha256::operator=(Sha256&&) noexcept = default;

Sha256::Sha256(const Sha256& other) : ctx_(std::make_unique<Ctx>()) {
  EVP_MD_CTX_copy_ex(ctx_->md, other.ctx_->md);
}

Sha256& Sha256::operator=(const Sha256& other) {
  if (this != &other) EVP_MD_CTX_copy_ex(ctx_->md, other.ctx_->md);
  return *this;
}

void Sha256::update(std::string_view bytes) { EVP_DigestUpdate(ctx_->md, bytes.data(), bytes.size()); }

std::string Sha256::hex() const {
  EVP_MD_CTX* tmp = EVP_MD_CTX_new();
  EVP_MD_CTX_copy_ex(tmp, ctx_->md);
  unsigned char out[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(tmp, out, &len);
  EVP_MD_CTX_free(tmp);
  static constexpr char digits[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    hex += digits[out[i] >> 4];
    hex += digits[out[i] & 0xF];
  }
  return hex;
}

std::string Sha256::of(std::string_view bytes) {
  Sha256 h;
  h.update(bytes);
  return h.hex();
}

std::string EffectRecord::canonical() const {
  nlohmann::json j = data.is_object() ? data : nlohmann::json::object();
  j["tick"] = tick;
  j["kind"] = kind;
  if (user_id) j["user_id"] = *user_id;
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

void EffectLog::append(EffectRecord record) {
  std::string line = record.canonical();
  line += '\n';
  hash_.update(line);
  ++count_;
  if (sink_ != nullptr) *sink_ << line;
  if (retain_) {
    line.pop_back();
    lines_.push_back(std::move(line));
  }
}

}  // namespace arsls
