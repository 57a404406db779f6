#include "qv/cache.hpp"

#include <cstring>
#include <fstream>

namespace qv {

namespace {

constexpr uint32_t kCacheVersion = 1;

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

struct Reader {
  const unsigned char* p;
  const unsigned char* end;
  std::string path;

  void need(size_t n, const char* what) {
    if (p + n > end)
      throw DataError("read_cache: " + path + ": truncated while reading " + std::string(what));
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
    p += 4;
    return v;
  }
  uint64_t u64(const char* what) {
    need(8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
    p += 8;
    return v;
  }
  uint8_t u8(const char* what) {
    need(1, what);
    return *p++;
  }
  float f32(const char* what) {
    const uint32_t bits = u32(what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
};

}  // namespace

void write_cache(const std::string& path, const std::vector<FeatureRecord>& records) {
  std::string buf;
  buf.reserve(16 + records.size() * 4100);
  buf += "QVFC";
  put_u32(buf, kCacheVersion);
  put_u64(buf, records.size());
  for (const auto& r : records) {
    buf.push_back(static_cast<char>(r.label == Label::bonafide ? 1 : 0));
    put_u32(buf, static_cast<uint32_t>(r.image.height));
    put_u32(buf, static_cast<uint32_t>(r.image.width));
    put_u32(buf, static_cast<uint32_t>(r.image.channels));
    for (float v : r.image.data) put_f32(buf, v);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("write_cache: cannot open " + path + " for writing");
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw DataError("write_cache: write failed for " + path);
}

std::vector<FeatureRecord> read_cache(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("read_cache: cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  Reader r{bytes.data(), bytes.data() + bytes.size(), path};
  r.need(4, "magic");
  if (std::memcmp(r.p, "QVFC", 4) != 0)
    throw DataError("read_cache: " + path + ": bad magic (not a QVFC cache)");
  r.p += 4;
  const uint32_t version = r.u32("version");
  if (version != kCacheVersion)
    throw DataError("read_cache: " + path + ": unsupported version " + std::to_string(version));
  const uint64_t count = r.u64("record count");

  std::vector<FeatureRecord> records;
  records.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    FeatureRecord rec;
    const uint8_t label = r.u8("label");
    if (label > 1)
      throw DataError("read_cache: " + path + ": record " + std::to_string(i) + ": bad label " +
                      std::to_string(label));
    rec.label = label == 1 ? Label::bonafide : Label::spoof;
    const uint32_t h = r.u32("height");
    const uint32_t w = r.u32("width");
    const uint32_t c = r.u32("channels");
    if (h == 0 || w == 0 || c == 0 || static_cast<uint64_t>(h) * w * c > (1ull << 28))
      throw DataError("read_cache: " + path + ": record " + std::to_string(i) +
                      ": implausible shape");
    rec.image = FeatureImage::make(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c),
                                   FeatureKind::generic);
    for (auto& v : rec.image.data) v = r.f32("sample");
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace qv
