#include "tabby/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include "tabby/error.hpp"

namespace tabby {
namespace {

constexpr std::array<char, 8> kMagic = {'T', 'A', 'B', 'B', 'Y', 'C', 'K', '\0'};

template <typename U>
void put_le(std::ostream& out, U value) {
  unsigned char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<unsigned char>(value >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename U>
U get_le(std::istream& in) {
  unsigned char bytes[sizeof(U)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(U));
  require(static_cast<std::size_t>(in.gcount()) == sizeof(U), ErrorKind::kCheckpoint, "truncated checkpoint");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

nlohmann::json read_header(std::istream& in, const std::string& path) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  require(in.gcount() == static_cast<std::streamsize>(magic.size()) && magic == kMagic, ErrorKind::kCheckpoint,
          path + ": not a checkpoint file");
  const auto version = get_le<std::uint32_t>(in);
  require(version == kCheckpointVersion, ErrorKind::kCheckpoint,
          path + ": unsupported checkpoint version " + std::to_string(version));
  const auto length = get_le<std::uint64_t>(in);
  require(length < (1ULL << 32), ErrorKind::kCheckpoint, path + ": corrupt manifest length");
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  require(static_cast<std::uint64_t>(in.gcount()) == length, ErrorKind::kCheckpoint, path + ": truncated manifest");
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kCheckpoint, path + ": corrupt manifest: " + e.what());
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  const auto params = ck.model.parameters();
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& p : params) {
    tensors.push_back({{"name", p->name}, {"rows", p->rows}, {"cols", p->cols}, {"offset", offset}});
    offset += p->numel();
  }
  nlohmann::json manifest = {
      {"config", ck.model.config().to_json()},
      {"moe", ck.model.moe().to_json()},
      {"vocab", ck.vocab.to_json()},
      {"schema", schema_to_json(ck.schema)},
      {"schema_fingerprint", schema_fingerprint(ck.schema)},
      {"tensors", tensors},
      {"tensor_elements", offset},
      {"rng_state", ck.rng_state},
      {"step", ck.step},
      {"extra", ck.extra},
  };
  const std::string text = manifest.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::kIo, "cannot write " + path);
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : params) {
    for (float v : p->value) {
      std::uint32_t bits = 0;
      std::memcpy(&bits, &v, sizeof bits);
      put_le<std::uint32_t>(out, bits);
    }
  }
  require(out.good(), ErrorKind::kIo, "failed writing " + path);
}

nlohmann::json read_checkpoint_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::kIo, "cannot open " + path);
  return read_header(in, path);
}

Checkpoint load_checkpoint(const std::string& path, const std::optional<std::string>& expected_fingerprint) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::kIo, "cannot open " + path);
  const auto manifest = read_header(in, path);

  Checkpoint ck;
  try {
    ck.schema = schema_from_json(manifest.at("schema"));
    const auto stored = manifest.at("schema_fingerprint").get<std::string>();
    require(stored == schema_fingerprint(ck.schema), ErrorKind::kCheckpoint,
            path + ": stored schema does not match its fingerprint");
    if (expected_fingerprint) {
      require(*expected_fingerprint == stored, ErrorKind::kCheckpoint,
              path + ": schema fingerprint " + stored + " does not match dataset schema " + *expected_fingerprint);
    }
    ck.vocab = Vocabulary::from_json(manifest.at("vocab"));
    const auto config = ModelConfig::from_json(manifest.at("config"));
    const auto moe = MoeSpec::from_json(manifest.at("moe"));
    ck.model = build_base_lm<float>(config);
    if (!moe.empty()) ck.model = tabbify(ck.model, moe);
    ck.rng_state = manifest.value("rng_state", std::string());
    ck.step = manifest.value("step", std::uint64_t{0});
    ck.extra = manifest.value("extra", nlohmann::json::object());

    const auto params = ck.model.parameters();
    const auto& tensors = manifest.at("tensors");
    require(tensors.size() == params.size(), ErrorKind::kCheckpoint,
            path + ": tensor count does not match the model structure");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& t = tensors[i];
      auto& p = *params[i];
      require(t.at("name").get<std::string>() == p.name && t.at("rows").get<std::size_t>() == p.rows &&
                  t.at("cols").get<std::size_t>() == p.cols,
              ErrorKind::kCheckpoint, path + ": tensor " + std::to_string(i) + " does not match " + p.name);
      for (auto& v : p.value) {
        const auto bits = get_le<std::uint32_t>(in);
        std::memcpy(&v, &bits, sizeof v);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kCheckpoint, path + ": corrupt manifest: " + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kCheckpoint || e.kind() == ErrorKind::kIo) throw;
    fail(ErrorKind::kCheckpoint, path + ": " + e.what());
  }
  in.peek();
  require(in.eof(), ErrorKind::kCheckpoint, path + ": trailing bytes after tensor data");
  return ck;
}

}  // namespace tabby
