#include "gec/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace gec {

namespace {

using nlohmann::json;

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_f32(std::ostream& out, float f) {
  uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(out, v);
}

float get_f32(std::istream& in) {
  uint32_t v = get_u32(in);
  float f;
  std::memcpy(&f, &v, 4);
  return f;
}

json config_to_json(const ModelConfig& c) {
  return json{{"vocab_size", c.vocab_size},
              {"emb_dim", c.emb_dim},
              {"rnn_dim", c.rnn_dim},
              {"att_dim", c.att_dim},
              {"p_dropout_rnn", c.p_dropout_rnn},
              {"p_src", c.p_src},
              {"tied", c.tied},
              {"literal_src_dropout", c.literal_src_dropout},
              {"max_len", c.max_len}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.vocab_size = j.value("vocab_size", 0);
  c.emb_dim = j.value("emb_dim", 512);
  c.rnn_dim = j.value("rnn_dim", 1024);
  c.att_dim = j.value("att_dim", 0);
  c.p_dropout_rnn = j.value("p_dropout_rnn", 0.0);
  c.p_src = j.value("p_src", 0.0);
  c.tied = j.value("tied", true);
  c.literal_src_dropout = j.value("literal_src_dropout", false);
  c.max_len = j.value("max_len", 120);
  return c;
}

constexpr uint32_t kFormatVersion = 1;

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write("GECF", 4);
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    put_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u64(out, t.shape.size());
    for (int64_t d : t.shape) put_u64(out, static_cast<uint64_t>(d));
    for (float v : t.data) put_f32(out, v);
  }
  json meta{{"format_version", kFormatVersion},
            {"step", ckpt.step},
            {"dev_loss", ckpt.dev_loss},
            {"dev_metric", ckpt.dev_metric},
            {"config_hash", ckpt.config_hash},
            {"kind", ckpt.kind},
            {"model_config", config_to_json(ckpt.model_config)},
            {"sources", ckpt.sources}};
  std::string blob = meta.dump();
  put_u64(out, blob.size());
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw std::runtime_error("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "GECF", 4) != 0)
    throw std::runtime_error(path + ": not a GECF checkpoint");
  uint32_t version = get_u32(in);
  if (version != kFormatVersion)
    throw std::runtime_error(path + ": unsupported format version " + std::to_string(version));
  uint32_t count = get_u32(in);
  Checkpoint ckpt;
  for (uint32_t i = 0; i < count; ++i) {
    uint64_t name_len = get_u64(in);
    std::string name(name_len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(name_len));
    uint64_t rank = get_u64(in);
    if (rank != 2) throw std::runtime_error(path + ": unsupported tensor rank");
    int64_t r = static_cast<int64_t>(get_u64(in));
    int64_t c = static_cast<int64_t>(get_u64(in));
    TensorF t(r, c);
    for (auto& v : t.data) v = get_f32(in);
    if (!in) throw std::runtime_error(path + ": truncated tensor payload");
    ckpt.tensors.emplace(std::move(name), std::move(t));
  }
  uint64_t blob_len = get_u64(in);
  std::string blob(blob_len, '\0');
  in.read(blob.data(), static_cast<std::streamsize>(blob_len));
  if (!in) throw std::runtime_error(path + ": truncated metadata");
  json meta = json::parse(blob);
  ckpt.step = meta.value("step", uint64_t{0});
  ckpt.dev_loss = meta.value("dev_loss", 0.0);
  ckpt.dev_metric = meta.value("dev_metric", 0.0);
  ckpt.config_hash = meta.value("config_hash", "");
  ckpt.kind = meta.value("kind", "seq2seq");
  if (meta.contains("model_config")) ckpt.model_config = config_from_json(meta["model_config"]);
  if (meta.contains("sources")) ckpt.sources = meta["sources"].get<std::vector<std::string>>();
  return ckpt;
}

Checkpoint average_checkpoints(const std::vector<Checkpoint>& ckpts) {
  if (ckpts.empty()) throw std::invalid_argument("average_checkpoints: nothing to average");
  const auto& first = ckpts.front();
  for (const auto& c : ckpts) {
    if (c.tensors.size() != first.tensors.size())
      throw std::invalid_argument("average_checkpoints: tensor sets differ");
    for (const auto& [name, t] : first.tensors) {
      auto it = c.tensors.find(name);
      if (it == c.tensors.end() || !it->second.same_shape(t))
        throw std::invalid_argument("average_checkpoints: mismatch on tensor '" + name + "'");
    }
  }
  Checkpoint avg = first;
  avg.sources.clear();
  for (const auto& c : ckpts)
    avg.sources.push_back("step-" + std::to_string(c.step));
  double inv = 1.0 / static_cast<double>(ckpts.size());
  for (auto& [name, t] : avg.tensors) {
    for (size_t i = 0; i < t.data.size(); ++i) {
      double acc = 0.0;
      for (const auto& c : ckpts) acc += static_cast<double>(c.tensors.at(name).data[i]);
      t.data[i] = static_cast<float>(acc * inv);
    }
  }
  return avg;
}

Checkpoint checkpoint_of(const Seq2SeqModelF& model) {
  Checkpoint c;
  c.model_config = model.cfg;
  c.kind = "seq2seq";
  for (const auto& [name, t] : model.store.params) c.tensors.emplace(name, t);
  return c;
}

Checkpoint checkpoint_of_lm(const DecoderLmF& lm) {
  Checkpoint c;
  c.model_config = lm.cfg;
  c.kind = "lm";
  for (const auto& [name, t] : lm.store.params) c.tensors.emplace(name, t);
  return c;
}

Seq2SeqModelF model_from_checkpoint(const Checkpoint& ckpt) {
  Seq2SeqModelF model = Seq2SeqModelF::init(ckpt.model_config, 0);
  if (ckpt.tensors.size() != model.store.params.size())
    throw std::runtime_error("checkpoint does not match the seq2seq parameter set");
  for (auto& [name, t] : model.store.params) {
    auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end() || !it->second.same_shape(t))
      throw std::runtime_error("checkpoint tensor mismatch on '" + name + "'");
    t = it->second;
  }
  return model;
}

DecoderLmF lm_from_checkpoint(const Checkpoint& ckpt) {
  DecoderLmF lm = DecoderLmF::init(ckpt.model_config, 0);
  if (ckpt.tensors.size() != lm.store.params.size())
    throw std::runtime_error("checkpoint does not match the LM parameter set");
  for (auto& [name, t] : lm.store.params) {
    auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end() || !it->second.same_shape(t))
      throw std::runtime_error("checkpoint tensor mismatch on '" + name + "'");
    t = it->second;
  }
  return lm;
}

}  // namespace gec
