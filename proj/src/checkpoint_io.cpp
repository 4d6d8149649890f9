#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <vector>

#include "dpal/error.hpp"
#include "dpal/pipeline.hpp"

namespace dpal::pipeline {

namespace {

constexpr char kMagic[8] = {'D', 'P', 'A', 'L', '0', '0', '0', '1'};
constexpr std::size_t kMaxLayers = 64;
constexpr std::size_t kMaxWidth = 10'000'000;
constexpr std::size_t kMaxEpoch = 1'000'000'000;

void append_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}

void append_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}

void append_f32(std::string& out, float v) {
  append_u32(out, std::bit_cast<std::uint32_t>(v));
}

void append_f64(std::string& out, double v) {
  append_u64(out, std::bit_cast<std::uint64_t>(v));
}

class Reader {
 public:
  Reader(const std::string& data, std::string path)
      : data_(data), path_(std::move(path)) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(
               static_cast<std::uint8_t>(data_[pos_ + i]))
           << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(
               static_cast<std::uint8_t>(data_[pos_ + i]))
           << (8 * i);
    }
    pos_ += 8;
    return v;
  }

  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }

  std::string bytes(std::size_t n) {
    need(n);
    std::string out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t remaining() const { return data_.size() - pos_; }

  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) {
      throw FormatError("checkpoint '" + path_ + "': truncated at offset " +
                        std::to_string(pos_));
    }
  }

 private:
  const std::string& data_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  ckpt.params.arch.validate();

  std::string out;
  out.append(kMagic, sizeof(kMagic));
  out.push_back(ckpt.params.arch.activation == model::Activation::kRelu
                    ? '\x00'
                    : '\x01');

  std::vector<std::size_t> widths;
  widths.push_back(ckpt.params.arch.input_dim);
  for (std::size_t h : ckpt.params.arch.hidden_dims) widths.push_back(h);
  widths.push_back(ckpt.params.arch.num_classes);
  append_u32(out, static_cast<std::uint32_t>(widths.size()));
  for (std::size_t w : widths) append_u32(out, static_cast<std::uint32_t>(w));

  append_u64(out, static_cast<std::uint64_t>(ckpt.epoch));
  append_u64(out, ckpt.seed);
  append_f64(out, ckpt.test_accuracy);

  for (const model::Layer& layer : ckpt.params.layers) {
    for (double v : layer.weights.values()) {
      append_f32(out, static_cast<float>(v));
    }
    for (double v : layer.biases) append_f32(out, static_cast<float>(v));
  }

  const std::string ledger_json = ckpt.ledger.to_json();
  append_u64(out, ledger_json.size());
  out += ledger_json;

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("checkpoint: cannot open '" + path + "'");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw FormatError("checkpoint: write to '" + path + "' failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("checkpoint: cannot open '" + path + "'");
  std::string data((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());

  Reader r(data, path);
  const std::string magic = r.bytes(sizeof(kMagic));
  if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("checkpoint '" + path + "': bad magic");
  }

  const std::uint8_t activation_code = r.u8();
  if (activation_code > 1) {
    throw FormatError("checkpoint '" + path + "': unknown activation code " +
                      std::to_string(activation_code));
  }

  const std::uint32_t num_widths = r.u32();
  if (num_widths < 2 || num_widths > kMaxLayers + 1) {
    throw FormatError("checkpoint '" + path + "': layer-width count " +
                      std::to_string(num_widths) + " outside [2, " +
                      std::to_string(kMaxLayers + 1) + "]");
  }
  std::vector<std::size_t> widths(num_widths);
  for (std::uint32_t i = 0; i < num_widths; ++i) {
    const std::uint32_t w = r.u32();
    if (w < 1 || w > kMaxWidth) {
      throw FormatError("checkpoint '" + path + "': layer width " +
                        std::to_string(w) + " outside [1, " +
                        std::to_string(kMaxWidth) + "]");
    }
    widths[i] = w;
  }

  Checkpoint ckpt;
  ckpt.epoch = static_cast<std::size_t>(r.u64());
  if (ckpt.epoch > kMaxEpoch) {
    throw FormatError("checkpoint '" + path + "': implausible epoch " +
                      std::to_string(ckpt.epoch));
  }
  ckpt.seed = r.u64();
  ckpt.test_accuracy = r.f64();
  if (!(ckpt.test_accuracy >= 0.0 && ckpt.test_accuracy <= 1.0)) {
    throw FormatError("checkpoint '" + path +
                      "': test accuracy outside [0, 1]");
  }

  model::Architecture arch;
  arch.input_dim = widths.front();
  arch.hidden_dims.assign(widths.begin() + 1, widths.end() - 1);
  arch.num_classes = widths.back();
  arch.activation = activation_code == 0 ? model::Activation::kRelu
                                         : model::Activation::kTanh;
  arch.validate();

  ckpt.params.arch = arch;
  ckpt.params.layers.resize(widths.size() - 1);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t fan_in = widths[l];
    const std::size_t fan_out = widths[l + 1];
    // Guard the multiply before allocating anything.
    if (fan_in > 0 && fan_out > r.remaining() / 4 / fan_in + 1) {
      throw FormatError("checkpoint '" + path +
                        "': weight block larger than the file");
    }
    model::Layer& layer = ckpt.params.layers[l];
    layer.weights = Matrix(fan_in, fan_out);
    double* w = layer.weights.data();
    for (std::size_t i = 0; i < fan_in * fan_out; ++i) {
      w[i] = static_cast<double>(r.f32());
    }
    layer.biases.resize(fan_out);
    for (std::size_t i = 0; i < fan_out; ++i) {
      layer.biases[i] = static_cast<double>(r.f32());
    }
  }

  const std::uint64_t ledger_len = r.u64();
  if (ledger_len > r.remaining()) {
    throw FormatError("checkpoint '" + path + "': ledger length " +
                      std::to_string(ledger_len) + " exceeds remaining " +
                      std::to_string(r.remaining()) + " bytes");
  }
  const std::string ledger_json = r.bytes(static_cast<std::size_t>(ledger_len));
  ckpt.ledger = privacy::PrivacyLedger::from_json(ledger_json);

  if (r.remaining() != 0) {
    throw FormatError("checkpoint '" + path + "': " +
                      std::to_string(r.remaining()) +
                      " trailing bytes after the ledger");
  }
  return ckpt;
}

}  // namespace dpal::pipeline
