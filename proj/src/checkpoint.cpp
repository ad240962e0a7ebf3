#include "stepattn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace stepattn {

namespace {

using json = nlohmann::json;

static_assert(sizeof(double) == 8);

std::string head_kind_name(HeadKind k) { return k == HeadKind::kTwoLayer ? "two-layer" : "single"; }
std::string activation_name(HeadActivation a) {
  return a == HeadActivation::kIdentity ? "identity" : "tanh";
}

HeadKind parse_head_kind(const std::string& s) {
  if (s == "two-layer") return HeadKind::kTwoLayer;
  if (s == "single") return HeadKind::kSingleLinear;
  throw CheckpointError("unknown head kind '" + s + "'");
}

HeadActivation parse_activation(const std::string& s) {
  if (s == "identity") return HeadActivation::kIdentity;
  if (s == "tanh") return HeadActivation::kTanh;
  throw CheckpointError("unknown head activation '" + s + "'");
}

std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  std::uint64_t r = 0;
  for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
  return r;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  check_params(ck.params, ck.model);
  json header;
  header["model"] = {{"input_size", ck.model.input_size},
                     {"hidden_size", ck.model.hidden_size},
                     {"num_layers", ck.model.num_layers},
                     {"use_attention", ck.model.use_attention},
                     {"attention_bias", ck.model.attention_bias},
                     {"head", head_kind_name(ck.model.head)},
                     {"head_activation", activation_name(ck.model.head_activation)}};
  header["train"] = {{"batch_size", ck.train.batch_size},
                     {"epochs", ck.train.epochs},
                     {"lr0", ck.train.lr0},
                     {"lr_decay_factor", ck.train.lr_decay_factor},
                     {"lr_step_epochs", ck.train.lr_step_epochs},
                     {"seed", ck.train.seed},
                     {"beta1", ck.train.beta1},
                     {"beta2", ck.train.beta2},
                     {"adam_eps", ck.train.adam_eps},
                     {"grad_clip", ck.train.grad_clip}};
  header["input"] = {{"mode", std::string(to_string(ck.input.mode))},
                     {"downsample_factor", ck.input.downsample_factor},
                     {"anti_alias", ck.input.anti_alias}};
  header["seed"] = ck.seed;
  header["epoch"] = ck.epoch;
  json tensors = json::array();
  const auto names = ck.params.tensor_names();
  const auto mats = ck.params.tensors();
  std::size_t count = 0;
  for (std::size_t i = 0; i < mats.size(); ++i) {
    tensors.push_back({{"name", names[i]}, {"rows", mats[i]->rows()}, {"cols", mats[i]->cols()}});
    count += mats[i]->size();
  }
  header["tensors"] = tensors;
  header["payload_bytes"] = count * 8;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n' << header.dump() << '\n';
  for (const Matrix* m : mats) {
    for (double v : m->values()) {
      const std::uint64_t bits = to_little(std::bit_cast<std::uint64_t>(v));
      out.write(reinterpret_cast<const char*>(&bits), 8);
    }
  }
  if (!out) throw CheckpointError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::string line;
  std::getline(in, line);
  std::istringstream magic(line);
  std::string word;
  int version = 0;
  magic >> word >> version;
  if (word != kCheckpointMagic) throw CheckpointError(path.string() + " is not a checkpoint");
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  std::getline(in, line);

  Checkpoint ck;
  json header;
  try {
    header = json::parse(line);
    const json& m = header.at("model");
    ck.model.input_size = m.at("input_size");
    ck.model.hidden_size = m.at("hidden_size");
    ck.model.num_layers = m.at("num_layers");
    ck.model.use_attention = m.at("use_attention");
    ck.model.attention_bias = m.at("attention_bias");
    ck.model.head = parse_head_kind(m.at("head"));
    ck.model.head_activation = parse_activation(m.at("head_activation"));
    const json& t = header.at("train");
    ck.train.batch_size = t.at("batch_size");
    ck.train.epochs = t.at("epochs");
    ck.train.lr0 = t.at("lr0");
    ck.train.lr_decay_factor = t.at("lr_decay_factor");
    ck.train.lr_step_epochs = t.at("lr_step_epochs");
    ck.train.seed = t.at("seed");
    ck.train.beta1 = t.at("beta1");
    ck.train.beta2 = t.at("beta2");
    ck.train.adam_eps = t.at("adam_eps");
    ck.train.grad_clip = t.at("grad_clip");
    const json& i = header.at("input");
    ck.input.mode = parse_input_mode(i.at("mode").get<std::string>());
    ck.input.downsample_factor = i.at("downsample_factor");
    ck.input.anti_alias = i.at("anti_alias");
    ck.seed = header.at("seed");
    ck.epoch = header.at("epoch");
  } catch (const json::exception& e) {
    throw CheckpointError("checkpoint header: " + std::string(e.what()));
  } catch (const std::invalid_argument& e) {
    throw CheckpointError("checkpoint header: " + std::string(e.what()));
  }

  ck.params = zero_params(ck.model);
  const auto names = ck.params.tensor_names();
  const auto mats = ck.params.tensors();
  const json& listed = header.at("tensors");
  if (listed.size() != mats.size())
    throw CheckpointError("checkpoint lists " + std::to_string(listed.size()) +
                          " tensors, model needs " + std::to_string(mats.size()));
  for (std::size_t k = 0; k < mats.size(); ++k) {
    if (listed[k].at("name") != names[k] || listed[k].at("rows") != mats[k]->rows() ||
        listed[k].at("cols") != mats[k]->cols())
      throw CheckpointError("checkpoint tensor " + std::to_string(k) + " does not match " +
                            names[k] + " " + mats[k]->shape_str());
    for (double& v : mats[k]->values()) {
      std::uint64_t bits = 0;
      if (!in.read(reinterpret_cast<char*>(&bits), 8))
        throw CheckpointError("checkpoint payload truncated in " + names[k]);
      v = std::bit_cast<double>(to_little(bits));
    }
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw CheckpointError("checkpoint has trailing bytes after the payload");
  return ck;
}

}  // namespace stepattn
