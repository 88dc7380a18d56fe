#include "uhal/codec/container.hpp"

#include <zlib.h>

#include <cstring>

#include "uhal/core/bytes.hpp"
#include "uhal/core/error.hpp"

namespace uhal::codec {

namespace {

constexpr char kMagic[4] = {'U', 'H', 'A', 'L'};

// Element counts per tensor, taken from a freshly built model of this arch.
struct Layout {
  std::vector<std::size_t> encoding;
  std::vector<std::size_t> head;
  std::vector<core::Shape> encoding_shapes;
  std::vector<core::Shape> head_shapes;
  std::vector<std::string> encoding_names;
  std::vector<std::string> head_names;
};

Layout layout_of(const models::ArchDescriptor& arch) {
  const models::RecoveryModel<float> model(arch, 0);
  Layout l;
  for (const auto* p : model.encoding_parameters()) {
    l.encoding.push_back(p->value.size());
    l.encoding_shapes.push_back(p->value.shape());
    l.encoding_names.push_back(p->name);
  }
  for (const auto* p : model.head_parameters()) {
    l.head.push_back(p->value.size());
    l.head_shapes.push_back(p->value.shape());
    l.head_names.push_back(p->name);
  }
  return l;
}

void check_counts(const std::vector<models::NamedTensor>& tensors, const std::vector<std::size_t>& expected,
                  const char* what) {
  if (tensors.size() != expected.size()) {
    throw ShapeError(std::string("container: ") + what + " has " + std::to_string(tensors.size()) +
                     " tensors, arch expects " + std::to_string(expected.size()));
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (tensors[i].value.size() != expected[i]) {
      throw ShapeError(std::string("container: ") + what + " tensor " + std::to_string(i) + " has " +
                       std::to_string(tensors[i].value.size()) + " values, arch expects " +
                       std::to_string(expected[i]));
    }
  }
}

void write_tensors(core::ByteWriter& w, const std::vector<models::NamedTensor>& tensors) {
  for (const auto& t : tensors) {
    w.u32(static_cast<std::uint32_t>(t.value.size()));
    for (float v : t.value.data()) w.f32(v);
  }
}

std::vector<models::NamedTensor> read_tensors(core::ByteReader& r, const std::vector<std::size_t>& counts,
                                              const std::vector<core::Shape>& shapes,
                                              const std::vector<std::string>& names) {
  std::vector<models::NamedTensor> out;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const std::uint32_t n = r.u32();
    if (n != counts[i]) {
      throw MetadataError(MetadataError::Kind::ArchMismatch,
                          "tensor " + names[i] + " holds " + std::to_string(n) + " values, arch expects " +
                              std::to_string(counts[i]));
    }
    const auto raw = r.bytes(std::size_t{n} * 4);
    std::vector<float> values(n);
    for (std::size_t k = 0; k < n; ++k) {
      const std::uint32_t bits = std::uint32_t{raw[4 * k]} | std::uint32_t{raw[4 * k + 1]} << 8 |
                                 std::uint32_t{raw[4 * k + 2]} << 16 | std::uint32_t{raw[4 * k + 3]} << 24;
      std::memcpy(&values[k], &bits, 4);
    }
    out.push_back({names[i], core::Tensor<float>(shapes[i], std::move(values))});
  }
  return out;
}

}  // namespace

std::string to_string(Modality m) {
  switch (m) {
    case Modality::NaturalSr: return "natural_sr";
    case Modality::TextSr: return "text_sr";
    case Modality::LowLight: return "lowlight";
    case Modality::Custom: return "custom";
  }
  return "custom";
}

Modality parse_modality(const std::string& s) {
  if (s == "natural_sr") return Modality::NaturalSr;
  if (s == "text_sr") return Modality::TextSr;
  if (s == "lowlight") return Modality::LowLight;
  if (s == "custom") return Modality::Custom;
  throw DataError("unknown modality '" + s + "'");
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong c = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in bounded pieces.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - off, 1u << 30);
    c = ::crc32(c, bytes.data() + off, static_cast<uInt>(n));
    off += n;
  }
  return static_cast<std::uint32_t>(c);
}

std::vector<std::uint8_t> serialize_container(const MetadataContainer& c) {
  c.arch.validate();
  const Layout l = layout_of(c.arch);
  if (c.include_encoder) {
    check_counts(c.weights.encoding, l.encoding, "encoding");
  } else if (!c.weights.encoding.empty()) {
    throw ShapeError("container: encoding weights given but include_encoder is off");
  }
  check_counts(c.weights.head, l.head, "head");

  core::ByteWriter w;
  w.bytes(std::span(reinterpret_cast<const std::uint8_t*>(kMagic), 4));
  w.u16(kContainerVersion);
  w.u8(static_cast<std::uint8_t>(c.modality));
  const auto arch = c.arch.serialize();
  w.u32(static_cast<std::uint32_t>(arch.size()));
  w.bytes(arch);
  w.u8(c.include_encoder ? 1 : 0);
  if (c.include_encoder) write_tensors(w, c.weights.encoding);
  write_tensors(w, c.weights.head);
  w.u32(crc32(w.buffer()));
  return w.take();
}

MetadataContainer deserialize_container(std::span<const std::uint8_t> bytes) {
  using K = MetadataError::Kind;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw MetadataError(K::BadMagic, "container does not start with UHAL magic");
  }
  if (bytes.size() < 4 + 2 + 1 + 4 + 1 + 4) throw MetadataError(K::Truncated, "container truncated");
  const auto body = bytes.first(bytes.size() - 4);
  core::ByteReader tail(bytes.last(4));
  if (crc32(body) != tail.u32()) throw MetadataError(K::CrcMismatch, "container checksum mismatch");

  core::ByteReader r(body);
  r.bytes(4);
  const std::uint16_t version = r.u16();
  if (version != kContainerVersion) {
    throw MetadataError(K::UnsupportedVersion, "unsupported container version " + std::to_string(version));
  }
  MetadataContainer c;
  c.modality = static_cast<Modality>(r.u8());
  const std::uint32_t arch_len = r.u32();
  c.arch = models::ArchDescriptor::deserialize(r.bytes(arch_len));
  const std::uint8_t flag = r.u8();
  if (flag > 1) throw MetadataError(K::ArchMismatch, "include_encoder flag must be 0 or 1");
  c.include_encoder = flag == 1;
  const Layout l = layout_of(c.arch);
  if (c.include_encoder) c.weights.encoding = read_tensors(r, l.encoding, l.encoding_shapes, l.encoding_names);
  c.weights.head = read_tensors(r, l.head, l.head_shapes, l.head_names);
  if (r.remaining() != 0) throw MetadataError(K::ArchMismatch, "trailing bytes after the weight blob");
  return c;
}

MetadataContainer make_container(const models::RecoveryModel<float>& model, Modality modality, bool include_encoder) {
  MetadataContainer c;
  c.modality = modality;
  c.arch = model.arch();
  c.include_encoder = include_encoder;
  c.weights = model.export_weights();
  if (!include_encoder) c.weights.encoding.clear();
  return c;
}

std::size_t container_size(const models::ArchDescriptor& arch, bool include_encoder) {
  const Layout l = layout_of(arch);
  std::size_t n = 4 + 2 + 1 + 4 + arch.serialize().size() + 1 + 4;
  auto add = [&](const std::vector<std::size_t>& counts) {
    for (std::size_t c : counts) n += 4 + 4 * c;
  };
  if (include_encoder) add(l.encoding);
  add(l.head);
  return n;
}

}  // namespace uhal::codec
