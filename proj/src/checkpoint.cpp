#include "bfa/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "bfa/quantizer.hpp"

namespace bfa {

namespace {

constexpr char kMagic[8] = {'B', 'F', 'A', 'C', 'K', 'P', 'T', '\0'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename T>
  void le(T v) {
    using U = std::make_unsigned_t<T>;
    const auto u = static_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
  }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  void shape(const Shape& s) {
    le(static_cast<std::uint32_t>(s.size()));
    for (std::size_t d : s) le(static_cast<std::uint64_t>(d));
  }
  std::vector<std::uint8_t>& data() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& in, std::size_t end) : in_(in), end_(end) {}

  const std::uint8_t* take(std::size_t n, const char* what) {
    if (end_ - pos_ < n) {
      throw CheckpointError(std::string("truncated checkpoint reading ") + what + " at byte " + std::to_string(pos_) +
                            ": need " + std::to_string(n) + " bytes, " + std::to_string(end_ - pos_) + " left");
    }
    const std::uint8_t* p = in_.data() + pos_;
    pos_ += n;
    return p;
  }
  template <typename T>
  T le(const char* what) {
    using U = std::make_unsigned_t<T>;
    const std::uint8_t* p = take(sizeof(T), what);
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(static_cast<U>(p[i]) << (8 * i));
    return static_cast<T>(u);
  }
  double f64(const char* what) { return std::bit_cast<double>(le<std::uint64_t>(what)); }
  Shape shape(const char* what) {
    const auto rank = le<std::uint32_t>(what);
    if (rank > 8) throw CheckpointError(std::string("implausible rank ") + std::to_string(rank) + " for " + what);
    Shape s(rank);
    for (auto& d : s) d = static_cast<std::size_t>(le<std::uint64_t>(what));
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size) {
  std::uint64_t h = 14695981039346656037ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<std::uint8_t> serialize_checkpoint(const ModelGraph& model) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.le(kCheckpointVersion);
  const bool quantized = model.mode() == ParamMode::Quantized;
  w.le(static_cast<std::uint8_t>(model.mode()));
  w.shape(model.input_shape());
  w.le(static_cast<std::uint32_t>(model.num_layers()));

  std::size_t weighted = 0;
  for (std::size_t i = 0; i < model.num_layers(); ++i) {
    const LayerSpec& spec = model.spec(i);
    w.le(static_cast<std::uint8_t>(spec.kind));
    w.le(static_cast<std::uint8_t>(spec.has_bias ? 1 : 0));
    w.le(static_cast<std::uint32_t>(spec.stride));
    w.le(static_cast<std::uint32_t>(spec.padding));
    w.le(static_cast<std::uint32_t>(spec.window));
    w.shape(spec.weight_shape);
    if (!spec.weighted()) continue;
    const std::size_t l = weighted++;
    if (quantized) {
      const int n_q = model.n_q(l);
      w.le(static_cast<std::uint8_t>(n_q));
      w.f64(model.delta_w(l));
      for (std::int32_t c : model.bits(l).codes()) {
        if (n_q <= 8) {
          w.le(static_cast<std::int8_t>(c));
        } else {
          w.le(static_cast<std::int16_t>(c));
        }
      }
    } else {
      for (double v : model.weight(l).values()) w.f64(v);
    }
    if (spec.has_bias) {
      for (double v : model.bias(l).values()) w.f64(v);
    }
  }
  const std::uint64_t digest = fnv1a64(w.data().data(), w.data().size());
  w.le(digest);
  return std::move(w.data());
}

ModelGraph deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof kMagic + 8) {
    throw CheckpointError("checkpoint too short: " + std::to_string(bytes.size()) + " bytes");
  }
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) throw CheckpointError("not a checkpoint (bad magic)");
  const std::size_t body = bytes.size() - 8;
  std::uint64_t stored = 0;
  for (std::size_t i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(bytes[body + i]) << (8 * i);
  if (stored != fnv1a64(bytes.data(), body)) throw CheckpointError("checkpoint digest mismatch; file is corrupted");

  Reader r(bytes, body);
  r.take(sizeof kMagic, "magic");
  const auto version = r.le<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto mode = r.le<std::uint8_t>("mode");
  if (mode > 1) throw CheckpointError("unknown parameter mode " + std::to_string(mode));
  const Shape input = r.shape("input shape");
  const auto count = r.le<std::uint32_t>("layer count");

  struct Payload {
    std::vector<double> weights;
    QuantizedLayer q;
    std::vector<double> bias;
  };
  std::vector<LayerSpec> specs;
  std::vector<Payload> payloads;
  for (std::uint32_t i = 0; i < count; ++i) {
    LayerSpec spec;
    const auto kind = r.le<std::uint8_t>("layer kind");
    if (kind > static_cast<std::uint8_t>(LayerKind::Flatten)) {
      throw CheckpointError("unknown layer kind " + std::to_string(kind) + " at layer " + std::to_string(i));
    }
    spec.kind = static_cast<LayerKind>(kind);
    spec.has_bias = r.le<std::uint8_t>("bias flag") != 0;
    spec.stride = r.le<std::uint32_t>("stride");
    spec.padding = r.le<std::uint32_t>("padding");
    spec.window = r.le<std::uint32_t>("window");
    spec.weight_shape = r.shape("weight shape");
    specs.push_back(spec);
    if (!spec.weighted()) continue;

    Payload p;
    const std::size_t n = shape_size(spec.weight_shape);
    if (mode == 1) {
      const int n_q = r.le<std::uint8_t>("bit width");
      check_bit_width(n_q);
      p.q.shape = spec.weight_shape;
      p.q.n_q = n_q;
      p.q.delta_w = r.f64("step size");
      p.q.codes.resize(n);
      for (auto& c : p.q.codes) {
        c = n_q <= 8 ? r.le<std::int8_t>("codes") : r.le<std::int16_t>("codes");
        if (c < code_min(n_q) || c > code_max(n_q)) {
          throw CheckpointError("code " + std::to_string(c) + " does not fit " + std::to_string(n_q) + " bits");
        }
      }
    } else {
      p.weights.resize(n);
      for (auto& v : p.weights) v = r.f64("weights");
    }
    if (spec.has_bias) {
      p.bias.resize(shape_size(spec.bias_shape()));
      for (auto& v : p.bias) v = r.f64("bias");
    }
    payloads.push_back(std::move(p));
  }
  if (r.pos() != body) {
    throw CheckpointError(std::to_string(body - r.pos()) + " trailing bytes before the digest");
  }

  ModelGraph model(input, std::move(specs));
  for (std::size_t l = 0; l < payloads.size(); ++l) {
    Payload& p = payloads[l];
    if (mode == 1) {
      model.set_quantized(l, p.q);
    } else {
      model.set_weight(l, Tensor(model.weight(l).shape(), std::move(p.weights)));
    }
    if (!p.bias.empty()) model.set_bias(l, Tensor(model.bias(l).shape(), std::move(p.bias)));
  }
  return model;
}

void save_checkpoint(const ModelGraph& model, const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = serialize_checkpoint(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing " + path.string());
}

ModelGraph load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace bfa
