#include "clipc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "clipc/config.hpp"
#include "clipc/error.hpp"
#include "json.hpp"

namespace clipc {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'C', 'L', 'I', 'P', 'C', 'K', 'P', 'T'};

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("checkpoint truncated");
  return v;
}

void write_matrix(std::ostream& out, const MatrixD& m) {
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
}

void read_matrix(std::istream& in, MatrixD& m) {
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!in) throw DataError("checkpoint truncated");
}

}  // namespace

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  const auto& params = state.model.parameters();
  const bool has_moments = !state.optimizer.m.empty();
  if (has_moments && (state.optimizer.m.size() != params.size() || state.optimizer.v.size() != params.size()))
    throw std::logic_error("optimizer state does not match parameter list");

  json header;
  header["encoder"] = json::parse(encoder_config_json(state.model.config()));
  header["epoch"] = state.epoch;
  header["global_step"] = state.global_step;
  header["seed"] = state.seed;
  header["best_probe"] = state.best_probe ? json(*state.best_probe) : json(nullptr);
  header["optimizer_step"] = state.optimizer.step;
  header["has_moments"] = has_moments;
  json plist = json::array();
  for (const auto& p : params) plist.push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}});
  header["parameters"] = plist;
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + tmp.string());
    out.write(kMagic, sizeof(kMagic));
    write_pod(out, kCheckpointVersion);
    write_pod(out, static_cast<std::uint64_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
      write_matrix(out, params[i].value);
      if (has_moments) {
        write_matrix(out, state.optimizer.m[i]);
        write_matrix(out, state.optimizer.v[i]);
      }
    }
    if (!out) throw std::runtime_error("failed writing checkpoint: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw DataError("not a checkpoint: " + path.string());
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  const auto len = read_pod<std::uint64_t>(in);
  if (len > (1u << 26)) throw DataError("checkpoint header too large");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError("checkpoint truncated");

  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("corrupt checkpoint header: ") + e.what());
  }

  try {
    const EncoderConfig cfg = encoder_config_from_json(header.at("encoder").dump());
    const auto seed = header.at("seed").get<std::uint64_t>();
    TrainState state{DualEncoder(cfg, seed)};
    state.epoch = header.at("epoch").get<int>();
    state.global_step = header.at("global_step").get<std::int64_t>();
    state.seed = seed;
    if (!header.at("best_probe").is_null()) state.best_probe = header.at("best_probe").get<double>();
    state.optimizer.step = header.at("optimizer_step").get<std::int64_t>();
    const bool has_moments = header.at("has_moments").get<bool>();

    auto& params = state.model.parameters();
    const auto& plist = header.at("parameters");
    if (plist.size() != params.size()) throw DataError("checkpoint parameter count mismatch");
    if (has_moments) {
      state.optimizer.m.resize(params.size());
      state.optimizer.v.resize(params.size());
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i];
      if (plist[i].at("name").get<std::string>() != p.name || plist[i].at("rows").get<Eigen::Index>() != p.value.rows() ||
          plist[i].at("cols").get<Eigen::Index>() != p.value.cols())
        throw DataError("checkpoint parameter layout mismatch at " + p.name);
      read_matrix(in, p.value);
      if (has_moments) {
        state.optimizer.m[i].resize(p.value.rows(), p.value.cols());
        state.optimizer.v[i].resize(p.value.rows(), p.value.cols());
        read_matrix(in, state.optimizer.m[i]);
        read_matrix(in, state.optimizer.v[i]);
      }
    }
    if (in.peek() != std::char_traits<char>::eof()) throw DataError("trailing bytes in checkpoint");
    return state;
  } catch (const json::exception& e) {
    throw DataError(std::string("corrupt checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("corrupt checkpoint header: ") + e.what());
  }
}

TrainState load_checkpoint(const std::filesystem::path& path, const EncoderConfig& expected) {
  TrainState state = load_checkpoint(path);
  if (!(state.model.config() == expected))
    throw ConfigError("checkpoint encoder config does not match the requested config: stored " +
                      encoder_config_json(state.model.config()) + ", requested " + encoder_config_json(expected));
  return state;
}

}  // namespace clipc
