#include "sq/container.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

#include "sq/quant.hpp"

namespace sq {

namespace {

constexpr char kMagic[4] = {'S', 'Q', 'T', 'C'};

void put_bytes(std::vector<std::byte>& out, const void* p, std::size_t n) {
  const auto* b = static_cast<const std::byte*>(p);
  out.insert(out.end(), b, b + n);
}

template <typename T>
void put_le(std::vector<std::byte>& out, T v) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i)
    out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::vector<std::byte>& out, float v) { put_le(out, std::bit_cast<std::uint32_t>(v)); }
void put_i32(std::vector<std::byte>& out, std::int32_t v) {
  put_le(out, static_cast<std::uint32_t>(v));
}

// Bounds-checked reader; every helper refuses to read past the end and
// reports the offset of the first missing/invalid byte.
struct Cursor {
  std::span<const std::byte> buf;
  std::size_t pos = 0;

  void need(std::size_t n, const char* what) const {
    if (pos > buf.size() || n > buf.size() - pos)
      throw FormatError(std::string("truncated ") + what, pos);
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(buf[pos++]);
  }
  template <typename T>
  T le(const char* what) {
    need(sizeof(T), what);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<T>(static_cast<std::uint8_t>(buf[pos + i])) << (8 * i);
    pos += sizeof(T);
    return v;
  }
  std::span<const std::byte> bytes(std::size_t n, const char* what) {
    need(n, what);
    auto s = buf.subspan(pos, n);
    pos += n;
    return s;
  }
};

std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::F32: return 4;
    case DType::I8: return 1;
    case DType::I32: return 4;
  }
  return 0;
}

}  // namespace

std::uint64_t ContainerEntry::element_count() const {
  std::uint64_t n = 1;
  for (std::uint64_t e : extents) n *= e;
  return n;
}

ContainerEntry ContainerEntry::from_tensor(std::string name, const Tensor& t) {
  ContainerEntry e;
  e.name = std::move(name);
  e.extents.assign(t.dims.begin(), t.dims.end());
  e.payload = t.data;
  return e;
}

ContainerEntry ContainerEntry::scalar_f32(std::string name, float v) {
  ContainerEntry e;
  e.name = std::move(name);
  e.extents = {1};
  e.payload = std::vector<float>{v};
  return e;
}

ContainerEntry ContainerEntry::scalar_i32(std::string name, std::int32_t v) {
  ContainerEntry e;
  e.name = std::move(name);
  e.extents = {1};
  e.payload = std::vector<std::int32_t>{v};
  return e;
}

ContainerEntry ContainerEntry::vector_f32(std::string name, std::span<const float> v) {
  ContainerEntry e;
  e.name = std::move(name);
  e.extents = {v.size()};
  e.payload = std::vector<float>(v.begin(), v.end());
  return e;
}

Tensor ContainerEntry::to_tensor() const {
  if (dtype() != DType::F32) throw DataError("entry '" + name + "' is not float32");
  std::vector<std::size_t> dims(extents.begin(), extents.end());
  return Tensor(std::move(dims), std::get<std::vector<float>>(payload));
}

float ContainerEntry::as_scalar_f32() const {
  const auto& v = as_f32();
  if (v.size() != 1) throw DataError("entry '" + name + "' is not a scalar");
  return v[0];
}

std::int32_t ContainerEntry::as_scalar_i32() const {
  if (dtype() != DType::I32) throw DataError("entry '" + name + "' is not int32");
  const auto& v = std::get<std::vector<std::int32_t>>(payload);
  if (v.size() != 1) throw DataError("entry '" + name + "' is not a scalar");
  return v[0];
}

const std::vector<float>& ContainerEntry::as_f32() const {
  if (dtype() != DType::F32) throw DataError("entry '" + name + "' is not float32");
  return std::get<std::vector<float>>(payload);
}

const std::vector<std::int8_t>& ContainerEntry::as_i8() const {
  if (dtype() != DType::I8) throw DataError("entry '" + name + "' is not int8");
  return std::get<std::vector<std::int8_t>>(payload);
}

std::vector<std::byte> encode_container(const std::vector<ContainerEntry>& entries) {
  std::vector<std::byte> out;
  put_bytes(out, kMagic, 4);
  put_le<std::uint32_t>(out, kContainerVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));

  std::set<std::string> seen;
  for (const ContainerEntry& e : entries) {
    if (!seen.insert(e.name).second)
      throw DataError("duplicate container entry name '" + e.name + "'");
    if (e.name.size() > std::numeric_limits<std::uint16_t>::max())
      throw DataError("entry name too long: '" + e.name + "'");

    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(e.name.size()));
    put_bytes(out, e.name.data(), e.name.size());
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(e.dtype()));
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(e.extents.size()));
    for (std::uint64_t ext : e.extents) put_le<std::uint64_t>(out, ext);

    std::visit(
        [&](const auto& vec) {
          using V = std::decay_t<decltype(vec)>;
          if (vec.size() != e.element_count())
            throw DataError("entry '" + e.name + "': payload does not match extents");
          if constexpr (std::is_same_v<V, std::vector<float>>) {
            for (float v : vec) put_f32(out, v);
          } else if constexpr (std::is_same_v<V, std::vector<std::int8_t>>) {
            for (std::int8_t v : vec) out.push_back(static_cast<std::byte>(v));
          } else {
            for (std::int32_t v : vec) put_i32(out, v);
          }
        },
        e.payload);
  }
  return out;
}

std::vector<ContainerEntry> parse_container(std::span<const std::byte> bytes) {
  Cursor cur{bytes};

  cur.need(4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad magic", 0);
  cur.pos = 4;

  const std::size_t version_off = cur.pos;
  const std::uint32_t version = cur.le<std::uint32_t>("version");
  if (version != kContainerVersion)
    throw FormatError("unsupported container version " + std::to_string(version), version_off);

  const std::uint32_t count = cur.le<std::uint32_t>("entry count");

  std::vector<ContainerEntry> entries;
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    ContainerEntry e;

    const std::uint16_t name_len = cur.le<std::uint16_t>("name length");
    const std::size_t name_off = cur.pos;
    const auto name_bytes = cur.bytes(name_len, "entry name");
    e.name.assign(reinterpret_cast<const char*>(name_bytes.data()), name_len);
    if (!seen.insert(e.name).second)
      throw FormatError("duplicate entry name '" + e.name + "'", name_off);

    const std::size_t dtype_off = cur.pos;
    const std::uint8_t dtype_tag = cur.u8("dtype tag");
    if (dtype_tag > 2)
      throw FormatError("unknown dtype tag " + std::to_string(dtype_tag), dtype_off);
    const DType dtype = static_cast<DType>(dtype_tag);

    const std::uint8_t rank = cur.u8("rank");
    std::uint64_t elems = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      const std::size_t ext_off = cur.pos;
      const std::uint64_t ext = cur.le<std::uint64_t>("extent");
      if (ext != 0 && elems > std::numeric_limits<std::uint64_t>::max() / ext)
        throw FormatError("extent product overflows", ext_off);
      elems *= ext;
      e.extents.push_back(ext);
    }

    const std::size_t payload_off = cur.pos;
    const std::uint64_t esz = dtype_size(dtype);
    if (elems > (bytes.size() - cur.pos) / esz)
      throw FormatError("declared payload exceeds file size", payload_off);
    const auto raw = cur.bytes(static_cast<std::size_t>(elems * esz), "payload");

    switch (dtype) {
      case DType::F32: {
        std::vector<float> v(static_cast<std::size_t>(elems));
        for (std::size_t j = 0; j < v.size(); ++j) {
          std::uint32_t u = 0;
          for (std::size_t b = 0; b < 4; ++b)
            u |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(raw[4 * j + b])) << (8 * b);
          v[j] = std::bit_cast<float>(u);
        }
        e.payload = std::move(v);
        break;
      }
      case DType::I8: {
        std::vector<std::int8_t> v(static_cast<std::size_t>(elems));
        for (std::size_t j = 0; j < v.size(); ++j) v[j] = static_cast<std::int8_t>(raw[j]);
        e.payload = std::move(v);
        break;
      }
      case DType::I32: {
        std::vector<std::int32_t> v(static_cast<std::size_t>(elems));
        for (std::size_t j = 0; j < v.size(); ++j) {
          std::uint32_t u = 0;
          for (std::size_t b = 0; b < 4; ++b)
            u |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(raw[4 * j + b])) << (8 * b);
          v[j] = static_cast<std::int32_t>(u);
        }
        e.payload = std::move(v);
        break;
      }
    }
    entries.push_back(std::move(e));
  }

  if (cur.pos != bytes.size()) throw FormatError("trailing bytes after last entry", cur.pos);
  return entries;
}

void save_container(const std::string& path, const std::vector<ContainerEntry>& entries) {
  const std::vector<std::byte> bytes = encode_container(entries);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + tmp + "' for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed for '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move '" + tmp + "' to '" + path + "': " + ec.message());
}

std::vector<ContainerEntry> load_container(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw IoError("cannot open '" + path + "'");
  const std::streamsize sz = f.tellg();
  f.seekg(0);
  std::vector<std::byte> bytes(static_cast<std::size_t>(sz));
  f.read(reinterpret_cast<char*>(bytes.data()), sz);
  if (!f) throw IoError("read failed for '" + path + "'");
  return parse_container(bytes);
}

std::vector<ContainerEntry> plan_to_entries(const SmoothingPlan& plan) {
  std::vector<ContainerEntry> entries;
  entries.push_back(ContainerEntry::scalar_f32("alpha", plan.alpha));
  for (const auto& [id, s] : plan.factors)
    entries.push_back(ContainerEntry::vector_f32("factor/" + id, s));
  return entries;
}

SmoothingPlan plan_from_entries(const std::vector<ContainerEntry>& entries) {
  SmoothingPlan plan;
  bool have_alpha = false;
  for (const ContainerEntry& e : entries) {
    if (e.name == "alpha") {
      plan.alpha = e.as_scalar_f32();
      have_alpha = true;
    } else if (e.name.starts_with("factor/")) {
      plan.factors[e.name.substr(7)] = e.as_f32();
    } else {
      throw DataError("unexpected entry '" + e.name + "' in smoothing plan container");
    }
  }
  if (!have_alpha) throw DataError("smoothing plan container is missing 'alpha'");
  return plan;
}

std::vector<ContainerEntry> calib_to_entries(const CalibResult& calib) {
  std::vector<ContainerEntry> entries;
  entries.push_back(
      ContainerEntry::scalar_i32("meta/sample_count", static_cast<std::int32_t>(calib.sample_count)));
  entries.push_back(ContainerEntry::scalar_f32("meta/clip_fraction", calib.clip_fraction));
  if (calib.alpha_used.has_value())
    entries.push_back(ContainerEntry::scalar_f32("meta/alpha_used", *calib.alpha_used));
  for (const auto& [key, st] : calib.stats)
    entries.push_back(ContainerEntry::vector_f32("stats/" + key, st.act_absmax));
  for (const auto& [key, v] : calib.static_absmax)
    entries.push_back(ContainerEntry::scalar_f32("absmax/" + key, v));
  for (const auto& [key, v] : calib.token_maxima)
    entries.push_back(ContainerEntry::vector_f32("tokmax/" + key, v));
  return entries;
}

CalibResult calib_from_entries(const std::vector<ContainerEntry>& entries) {
  CalibResult calib;
  for (const ContainerEntry& e : entries) {
    if (e.name == "meta/sample_count") {
      calib.sample_count = static_cast<std::size_t>(e.as_scalar_i32());
    } else if (e.name == "meta/clip_fraction") {
      calib.clip_fraction = e.as_scalar_f32();
    } else if (e.name == "meta/alpha_used") {
      calib.alpha_used = e.as_scalar_f32();
    } else if (e.name.starts_with("stats/")) {
      ChannelStats st;
      st.act_absmax = e.as_f32();
      calib.stats[e.name.substr(6)] = std::move(st);
    } else if (e.name.starts_with("absmax/")) {
      calib.static_absmax[e.name.substr(7)] = e.as_scalar_f32();
    } else if (e.name.starts_with("tokmax/")) {
      calib.token_maxima[e.name.substr(7)] = e.as_f32();
    } else {
      throw DataError("unexpected entry '" + e.name + "' in calibration container");
    }
  }
  for (auto& [key, st] : calib.stats) {
    st.sample_count = calib.sample_count;
    st.clip_fraction = calib.clip_fraction;
  }
  return calib;
}

namespace {

std::string blk_key(std::size_t b, const char* field) {
  return "model/blk" + std::to_string(b) + "/" + field;
}

void linear_entries(std::vector<ContainerEntry>& out, std::size_t b, const char* name,
                    const LinearParams& lin) {
  out.push_back(ContainerEntry::from_tensor(blk_key(b, name) + ".weight", lin.weight));
  out.push_back(ContainerEntry::vector_f32(blk_key(b, name) + ".bias", lin.bias));
}

const ContainerEntry& find_entry(const std::vector<ContainerEntry>& entries,
                                 const std::string& name) {
  for (const ContainerEntry& e : entries)
    if (e.name == name) return e;
  throw DataError("model container is missing entry '" + name + "'");
}

LinearParams linear_from_entries(const std::vector<ContainerEntry>& entries, std::size_t b,
                                 const char* name) {
  LinearParams lin;
  lin.weight = find_entry(entries, blk_key(b, name) + ".weight").to_tensor();
  lin.bias = find_entry(entries, blk_key(b, name) + ".bias").as_f32();
  return lin;
}

}  // namespace

std::vector<ContainerEntry> model_to_entries(const ModelGraph& model) {
  std::vector<ContainerEntry> out;
  out.push_back(ContainerEntry::scalar_i32("model/blocks",
                                           static_cast<std::int32_t>(model.blocks.size())));
  out.push_back(
      ContainerEntry::scalar_i32("model/channels", static_cast<std::int32_t>(model.channels)));
  out.push_back(
      ContainerEntry::scalar_i32("model/heads", static_cast<std::int32_t>(model.head_count)));
  out.push_back(ContainerEntry::scalar_f32("model/ln_eps", model.blocks.empty()
                                                               ? 1e-5f
                                                               : model.blocks[0].ln1.eps));
  for (std::size_t b = 0; b < model.blocks.size(); ++b) {
    const BlockParams& blk = model.blocks[b];
    out.push_back(ContainerEntry::vector_f32(blk_key(b, "ln1.gamma"), blk.ln1.gamma));
    out.push_back(ContainerEntry::vector_f32(blk_key(b, "ln1.beta"), blk.ln1.beta));
    out.push_back(ContainerEntry::vector_f32(blk_key(b, "ln2.gamma"), blk.ln2.gamma));
    out.push_back(ContainerEntry::vector_f32(blk_key(b, "ln2.beta"), blk.ln2.beta));
    linear_entries(out, b, "q_proj", blk.q_proj);
    linear_entries(out, b, "k_proj", blk.k_proj);
    linear_entries(out, b, "v_proj", blk.v_proj);
    linear_entries(out, b, "out_proj", blk.out_proj);
    linear_entries(out, b, "fc1", blk.fc1);
    linear_entries(out, b, "fc2", blk.fc2);
  }
  return out;
}

ModelGraph model_from_entries(const std::vector<ContainerEntry>& entries) {
  ModelGraph m;
  const std::size_t blocks =
      static_cast<std::size_t>(find_entry(entries, "model/blocks").as_scalar_i32());
  m.channels = static_cast<std::size_t>(find_entry(entries, "model/channels").as_scalar_i32());
  m.head_count = static_cast<std::size_t>(find_entry(entries, "model/heads").as_scalar_i32());
  const float eps = find_entry(entries, "model/ln_eps").as_scalar_f32();

  for (std::size_t b = 0; b < blocks; ++b) {
    BlockParams blk;
    blk.ln1.gamma = find_entry(entries, blk_key(b, "ln1.gamma")).as_f32();
    blk.ln1.beta = find_entry(entries, blk_key(b, "ln1.beta")).as_f32();
    blk.ln2.gamma = find_entry(entries, blk_key(b, "ln2.gamma")).as_f32();
    blk.ln2.beta = find_entry(entries, blk_key(b, "ln2.beta")).as_f32();
    blk.ln1.eps = eps;
    blk.ln2.eps = eps;
    blk.q_proj = linear_from_entries(entries, b, "q_proj");
    blk.k_proj = linear_from_entries(entries, b, "k_proj");
    blk.v_proj = linear_from_entries(entries, b, "v_proj");
    blk.out_proj = linear_from_entries(entries, b, "out_proj");
    blk.fc1 = linear_from_entries(entries, b, "fc1");
    blk.fc2 = linear_from_entries(entries, b, "fc2");
    m.blocks.push_back(std::move(blk));
  }
  validate_model(m);
  return m;
}

std::vector<ContainerEntry> quantized_model_to_entries(const ModelGraph& model,
                                                       SettingLevel level,
                                                       const CalibResult& calib) {
  std::vector<ContainerEntry> out;
  out.push_back(ContainerEntry::scalar_i32("qmodel/level", static_cast<std::int32_t>(level)));
  out.push_back(ContainerEntry::scalar_i32("qmodel/blocks",
                                           static_cast<std::int32_t>(model.blocks.size())));
  out.push_back(
      ContainerEntry::scalar_i32("qmodel/channels", static_cast<std::int32_t>(model.channels)));
  out.push_back(
      ContainerEntry::scalar_i32("qmodel/heads", static_cast<std::int32_t>(model.head_count)));

  const QuantScheme wscheme = resolve(level).weight;
  auto push_linear = [&](std::size_t b, const char* name, const LinearParams& lin) {
    const QuantizedTensor wq = quantize(lin.weight, wscheme);
    ContainerEntry codes;
    codes.name = "qmodel/blk" + std::to_string(b) + "/" + name + ".weight_q";
    codes.extents.assign(wq.dims.begin(), wq.dims.end());
    codes.payload = wq.values;
    out.push_back(std::move(codes));
    out.push_back(ContainerEntry::scalar_f32(
        "qmodel/blk" + std::to_string(b) + "/" + name + ".weight_scale", wq.scales[0]));
    out.push_back(ContainerEntry::vector_f32(
        "qmodel/blk" + std::to_string(b) + "/" + name + ".bias", lin.bias));
  };

  for (std::size_t b = 0; b < model.blocks.size(); ++b) {
    const BlockParams& blk = model.blocks[b];
    out.push_back(ContainerEntry::vector_f32("qmodel/blk" + std::to_string(b) + "/ln1.gamma",
                                             blk.ln1.gamma));
    out.push_back(ContainerEntry::vector_f32("qmodel/blk" + std::to_string(b) + "/ln1.beta",
                                             blk.ln1.beta));
    out.push_back(ContainerEntry::vector_f32("qmodel/blk" + std::to_string(b) + "/ln2.gamma",
                                             blk.ln2.gamma));
    out.push_back(ContainerEntry::vector_f32("qmodel/blk" + std::to_string(b) + "/ln2.beta",
                                             blk.ln2.beta));
    push_linear(b, "q_proj", blk.q_proj);
    push_linear(b, "k_proj", blk.k_proj);
    push_linear(b, "v_proj", blk.v_proj);
    push_linear(b, "out_proj", blk.out_proj);
    push_linear(b, "fc1", blk.fc1);
    push_linear(b, "fc2", blk.fc2);
  }

  for (const auto& [key, absmax] : calib.static_absmax)
    out.push_back(ContainerEntry::scalar_f32("qmodel/act_scale/" + key,
                                             compute_step(absmax, wscheme.bits)));
  return out;
}

}  // namespace sq
