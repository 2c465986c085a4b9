#include "gcagc/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <map>

#include "gcagc/error.hpp"
#include "gcagc/netpbm.hpp"

namespace fs = std::filesystem;

namespace gcagc {

namespace {

constexpr char kMagic[8] = {'G', 'C', 'A', 'G', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::conditional_t<sizeof(T) == 2, std::uint16_t,
                                                                     std::uint8_t>>>;
  const U u = std::bit_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
}

class Reader {
 public:
  Reader(std::span<const std::uint8_t> b, const std::string& source) : b_(b), source_(source) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(source_ + ": byte " + std::to_string(pos_) + ": " + what);
  }

  template <typename U>
  U get(const char* what) {
    if (b_.size() - pos_ < sizeof(U)) fail(std::string("truncated reading ") + what);
    U u = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) u |= static_cast<U>(b_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return u;
  }

  std::span<const std::uint8_t> bytes(std::size_t n, const char* what) {
    if (b_.size() - pos_ < n) fail(std::string("truncated reading ") + what);
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == b_.size(); }

 private:
  std::span<const std::uint8_t> b_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const TensorTable& table) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(table.size()));
  for (const auto& t : table) {
    if (t.name.empty() || t.name.size() > 0xFFFF) throw FormatError("bad tensor name '" + t.name + "'");
    if (t.shape.size() > 0xFF) throw FormatError("tensor '" + t.name + "' has too many axes");
    if (numel(t.shape) != t.data.size()) {
      throw DimensionError("tensor '" + t.name + "' shape " + to_string(t.shape) +
                           " does not match " + std::to_string(t.data.size()) + " values");
    }
    put<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.shape.size()));
    for (auto d : t.shape) {
      if (d == 0 || d > 0xFFFFFFFFu) throw FormatError("tensor '" + t.name + "' has a bad extent");
      put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    }
    for (double v : t.data) put<double>(out, v);
  }
  return out;
}

TensorTable decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& source) {
  Reader r(bytes, source);
  auto magic = r.bytes(8, "magic");
  if (std::memcmp(magic.data(), kMagic, 8) != 0) r.fail("bad magic (not a checkpoint)");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw UnsupportedVersionError(source + ": unsupported checkpoint version " +
                                  std::to_string(version) + " (this build reads version " +
                                  std::to_string(kCheckpointVersion) + ")");
  }
  const auto count = r.get<std::uint32_t>("tensor count");
  TensorTable table;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto len = r.get<std::uint16_t>("name length");
    if (len == 0) r.fail("empty tensor name");
    auto name = r.bytes(len, "name");
    t.name.assign(name.begin(), name.end());
    const auto rank = r.get<std::uint8_t>("rank");
    std::size_t total = 1;
    for (std::uint8_t a = 0; a < rank; ++a) {
      const auto d = r.get<std::uint32_t>("extent");
      if (d == 0) r.fail("zero extent in tensor '" + t.name + "'");
      t.shape.push_back(d);
      total *= d;
      if (total > (std::size_t{1} << 32)) r.fail("tensor '" + t.name + "' too large");
    }
    auto payload = r.bytes(total * 8, "payload");
    t.data.resize(total);
    for (std::size_t k = 0; k < total; ++k) {
      std::uint64_t u = 0;
      for (int b = 0; b < 8; ++b) u |= static_cast<std::uint64_t>(payload[k * 8 + b]) << (8 * b);
      t.data[k] = std::bit_cast<double>(u);
    }
    table.push_back(std::move(t));
  }
  if (!r.done()) r.fail("trailing bytes after last tensor");
  return table;
}

void save_checkpoint(const fs::path& path, const TensorTable& table) {
  const auto bytes = encode_checkpoint(table);
  fs::path tmp = path;
  tmp += ".tmp";
  write_file_bytes(tmp, bytes);
  fs::rename(tmp, path);
}

TensorTable load_checkpoint(const fs::path& path) {
  return decode_checkpoint(read_file_bytes(path), path.string());
}

namespace {

NamedTensor scalar_entry(const std::string& name, double v) { return {name, {}, {v}}; }

}  // namespace

TensorTable model_to_table(const Model& model, const AdamState* state) {
  const ModelConfig& c = model.config;
  TensorTable t;
  t.push_back(scalar_entry("meta/input_size", static_cast<double>(c.encoder.input_size)));
  t.push_back({"meta/stage_channels",
               {3},
               {static_cast<double>(c.encoder.stage_channels[0]),
                static_cast<double>(c.encoder.stage_channels[1]),
                static_cast<double>(c.encoder.stage_channels[2])}});
  t.push_back(scalar_entry("meta/fpn_channels", static_cast<double>(c.encoder.fpn_channels)));
  t.push_back(scalar_entry("meta/graph_stride", static_cast<double>(c.encoder.graph_stride)));
  t.push_back(scalar_entry("meta/agcn_rank", static_cast<double>(c.agcn.rank)));
  t.push_back(scalar_entry("meta/agcn_hidden", static_cast<double>(c.agcn.hidden)));
  t.push_back(scalar_entry("meta/agcn_out", static_cast<double>(c.agcn.out)));
  t.push_back(scalar_entry("meta/block_rows", static_cast<double>(c.agcn.block_rows)));
  t.push_back(scalar_entry("meta/solver_steps", static_cast<double>(c.agcm.solver_steps)));
  t.push_back(scalar_entry("meta/step_size", c.agcm.step_size));
  t.push_back(scalar_entry("meta/epsilon", c.agcm.epsilon));
  t.push_back(scalar_entry("meta/lambda", c.lambda));
  t.push_back(scalar_entry("meta/weighting", c.weighting == LossWeighting::paper ? 0.0 : 1.0));
  t.push_back(scalar_entry("meta/ablation", static_cast<double>(static_cast<int>(c.ablation))));
  for (const auto& [name, tensor] : model.params.entries()) {
    auto d = tensor.data();
    t.push_back({name, tensor.shape(), {d.begin(), d.end()}});
  }
  if (state) {
    t.push_back(scalar_entry("opt/step", static_cast<double>(state->step)));
    const auto& entries = model.params.entries();
    for (std::size_t p = 0; p < entries.size(); ++p) {
      t.push_back({"opt/m/" + entries[p].first, entries[p].second.shape(), state->m[p]});
      t.push_back({"opt/v/" + entries[p].first, entries[p].second.shape(), state->v[p]});
    }
  }
  return t;
}

LoadedModel model_from_table(const TensorTable& table) {
  std::map<std::string, const NamedTensor*> byname;
  for (const auto& t : table) {
    if (!byname.emplace(t.name, &t).second) throw FormatError("duplicate tensor '" + t.name + "'");
  }
  auto meta = [&](const std::string& key) -> const NamedTensor& {
    auto it = byname.find("meta/" + key);
    if (it == byname.end()) throw FormatError("checkpoint lacks meta/" + key);
    return *it->second;
  };
  auto count = [&](const std::string& key) {
    const auto& t = meta(key);
    const double v = t.data.at(0);
    if (t.data.size() != 1 || !(v >= 0.0) || v != std::floor(v)) {
      throw FormatError("meta/" + key + " is not a count");
    }
    return static_cast<std::size_t>(v);
  };

  ModelConfig c;
  c.encoder.input_size = count("input_size");
  const auto& sc = meta("stage_channels");
  if (sc.data.size() != 3) throw FormatError("meta/stage_channels needs 3 values");
  for (int i = 0; i < 3; ++i) c.encoder.stage_channels[i] = static_cast<std::size_t>(sc.data[i]);
  c.encoder.fpn_channels = count("fpn_channels");
  c.encoder.graph_stride = count("graph_stride");
  c.agcn.rank = count("agcn_rank");
  c.agcn.hidden = count("agcn_hidden");
  c.agcn.out = count("agcn_out");
  c.agcn.block_rows = count("block_rows");
  c.agcm.solver_steps = count("solver_steps");
  c.agcm.step_size = meta("step_size").data.at(0);
  c.agcm.epsilon = meta("epsilon").data.at(0);
  c.lambda = meta("lambda").data.at(0);
  c.weighting = count("weighting") == 0 ? LossWeighting::paper : LossWeighting::balanced;
  const std::size_t ab = count("ablation");
  if (ab > 3) throw FormatError("meta/ablation out of range");
  c.ablation = static_cast<Ablation>(ab);

  LoadedModel out{Model::create(c, 0), {}, false};
  std::size_t used = 0;
  for (const auto& [name, tensor] : out.model.params.entries()) {
    auto it = byname.find(name);
    if (it == byname.end()) throw FormatError("checkpoint lacks parameter '" + name + "'");
    if (it->second->shape != tensor.shape()) {
      throw FormatError("parameter '" + name + "' has shape " + to_string(it->second->shape) +
                        ", model expects " + to_string(tensor.shape()));
    }
    ++used;
  }
  std::size_t opt = 0, metas = 0;
  for (const auto& t : table) {
    if (t.name.rfind("opt/", 0) == 0) ++opt;
    if (t.name.rfind("meta/", 0) == 0) ++metas;
  }
  if (used + opt + metas != table.size()) throw FormatError("checkpoint holds unknown tensors");

  if (opt > 0) {
    out.state = AdamState::for_params(out.model.params);
    out.state.step = static_cast<std::uint64_t>(byname.count("opt/step") ? byname["opt/step"]->data.at(0) : 0);
    const auto& entries = out.model.params.entries();
    for (std::size_t p = 0; p < entries.size(); ++p) {
      for (const char* which : {"m", "v"}) {
        auto it = byname.find(std::string("opt/") + which + "/" + entries[p].first);
        if (it == byname.end() || it->second->data.size() != entries[p].second.numel()) {
          throw FormatError(std::string("bad optimizer state for '") + entries[p].first + "'");
        }
        (which[0] == 'm' ? out.state.m : out.state.v)[p] = it->second->data;
      }
    }
    out.has_state = true;
  }
  // All checks passed; copy the parameters.
  for (auto& entry : out.model.params.entries()) {
    Tensor t = entry.second;
    const auto& src = byname[entry.first]->data;
    std::copy(src.begin(), src.end(), t.mutable_data().begin());
  }
  return out;
}

}  // namespace gcagc
