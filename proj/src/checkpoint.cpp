#include "mdaqa/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "mdaqa/config_io.hpp"

namespace mdaqa {

namespace {

using json = nlohmann::json;

constexpr std::string_view kAlphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return r;
  }
}

template <typename Derived>
json tensor_to_json(const Eigen::PlainObjectBase<Derived>& t) {
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(t.size()) * 8);
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    const std::uint64_t v = to_little(std::bit_cast<std::uint64_t>(t.data()[i]));
    std::memcpy(bytes.data() + 8 * i, &v, 8);
  }
  json j;
  if (Derived::ColsAtCompileTime == 1) {
    j["shape"] = {t.rows()};
  } else {
    j["shape"] = {t.rows(), t.cols()};
  }
  j["data_b64"] = base64_encode(bytes);
  return j;
}

template <typename Derived>
void tensor_from_json(const nlohmann::json& j, std::string_view name, Eigen::PlainObjectBase<Derived>& t) {
  const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
  const bool is_vector = Derived::ColsAtCompileTime == 1;
  const std::vector<Eigen::Index> expected =
      is_vector ? std::vector<Eigen::Index>{t.rows()} : std::vector<Eigen::Index>{t.rows(), t.cols()};
  if (shape != expected) {
    throw ParseError("checkpoint tensor '" + std::string(name) + "': shape does not match config");
  }
  const auto bytes = base64_decode(j.at("data_b64").get<std::string>());
  if (bytes.size() != static_cast<std::size_t>(t.size()) * 8) {
    throw ParseError("checkpoint tensor '" + std::string(name) + "': payload has " +
                     std::to_string(bytes.size()) + " bytes, expected " +
                     std::to_string(t.size() * 8));
  }
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    std::uint64_t v = 0;
    std::memcpy(&v, bytes.data() + 8 * i, 8);
    t.data()[i] = std::bit_cast<double>(to_little(v));
  }
}

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t n = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += kAlphabet[(n >> 6) & 63];
    out += kAlphabet[n & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const std::uint32_t n = bytes[i] << 16;
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += "==";
  } else if (rest == 2) {
    const std::uint32_t n = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += kAlphabet[(n >> 6) & 63];
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw ParseError("base64: length is not a multiple of 4");
  std::array<int, 256> lookup;
  lookup.fill(-1);
  for (std::size_t i = 0; i < kAlphabet.size(); ++i) {
    lookup[static_cast<unsigned char>(kAlphabet[i])] = static_cast<int>(i);
  }
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    const bool last = i + 4 == text.size();
    int pad = 0;
    std::uint32_t n = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=') {
        if (!last || k < 2) throw ParseError("base64: misplaced padding");
        ++pad;
        n <<= 6;
        continue;
      }
      if (pad > 0) throw ParseError("base64: data after padding");
      const int v = lookup[static_cast<unsigned char>(c)];
      if (v < 0) throw ParseError("base64: invalid character");
      n = (n << 6) | static_cast<std::uint32_t>(v);
    }
    out.push_back(static_cast<std::uint8_t>((n >> 16) & 0xff));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>((n >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(n & 0xff));
  }
  return out;
}

Checkpoint Checkpoint::capture(const QaModel& model, std::optional<MaskSnapshot> snapshot,
                               const OptimizerConfig& optimizer) {
  Checkpoint c;
  c.model = model.config();
  c.encoder = model.encoder().params();
  c.mask = model.mask().params();
  c.snapshot = std::move(snapshot);
  c.optimizer = optimizer;
  c.rng_streams["init"] = optimizer.seed;
  c.rng_streams["shuffle"] = optimizer.seed;
  return c;
}

QaModel Checkpoint::restore() const { return QaModel(model, encoder, mask); }

std::string checkpoint_to_json(const Checkpoint& ckpt) {
  json j;
  j["format_version"] = ckpt.format_version;
  j["model_config"] = ckpt.model;
  j["optimizer"] = ckpt.optimizer;
  j["rng_streams"] = ckpt.rng_streams;
  json tensors = json::object();
  auto put = [&tensors](std::string_view name, const auto& t) {
    tensors[std::string(name)] = tensor_to_json(t);
  };
  ckpt.encoder.for_each(put);
  ckpt.mask.for_each(put);
  j["tensors"] = std::move(tensors);
  if (ckpt.snapshot) {
    json s;
    s["values"] = tensor_to_json(ckpt.snapshot->values);
    s["taken_at"] = ckpt.snapshot->taken_at;
    s["active_tolerance"] = ckpt.snapshot->active_tolerance;
    j["snapshot"] = std::move(s);
  } else {
    j["snapshot"] = nullptr;
  }
  return j.dump(1);
}

Checkpoint checkpoint_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("checkpoint: malformed JSON: ") + e.what());
  }
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion) {
      throw VersionError("checkpoint: format_version " + std::to_string(version) +
                         " is not supported (expected " +
                         std::to_string(kCheckpointFormatVersion) + ")");
    }
    Checkpoint c;
    c.format_version = version;
    c.model = j.at("model_config").get<ModelConfig>();
    c.optimizer = j.at("optimizer").get<OptimizerConfig>();
    c.rng_streams = j.at("rng_streams").get<std::map<std::string, std::uint64_t>>();
    c.encoder = ToyEncoderParams<double>::zeros(c.model.encoder);
    c.mask = MaskParams<double>::zeros(c.model.mask);
    const auto& tensors = j.at("tensors");
    auto get = [&tensors](std::string_view name, auto& t) {
      const auto it = tensors.find(std::string(name));
      if (it == tensors.end()) throw ParseError("checkpoint: missing tensor '" + std::string(name) + "'");
      tensor_from_json(*it, name, t);
    };
    c.encoder.for_each(get);
    c.mask.for_each(get);
    const auto& s = j.at("snapshot");
    if (!s.is_null()) {
      MaskSnapshot snap;
      snap.values = RealVector::Zero(static_cast<Eigen::Index>(c.model.mask.bottleneck));
      tensor_from_json(s.at("values"), "snapshot.values", snap.values);
      snap.taken_at = s.at("taken_at").get<std::string>();
      snap.active_tolerance = s.at("active_tolerance").get<double>();
      c.snapshot = std::move(snap);
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: schema error: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << checkpoint_to_json(ckpt) << '\n';
  if (!out) throw Error("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open for reading: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_json(ss.str());
}

}  // namespace mdaqa
