#include <zlib.h>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "dpal/data.hpp"
#include "dpal/error.hpp"

namespace dpal::data {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

bool has_gz_suffix(const std::string& path) {
  return path.size() >= 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  if (has_gz_suffix(path)) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (f == nullptr) throw FormatError("cannot open " + path);
    std::vector<std::uint8_t> out;
    std::uint8_t buf[1 << 16];
    int n;
    while ((n = gzread(f, buf, sizeof(buf))) > 0) {
      out.insert(out.end(), buf, buf + n);
    }
    if (n < 0) {
      int errnum = 0;
      const char* msg = gzerror(f, &errnum);
      const std::string detail = msg != nullptr ? msg : "unknown";
      gzclose(f);
      throw FormatError("gzip read error in " + path + ": " + detail);
    }
    gzclose(f);
    return out;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::string& path,
                      const std::vector<std::uint8_t>& bytes) {
  if (has_gz_suffix(path)) {
    gzFile f = gzopen(path.c_str(), "wb");
    if (f == nullptr) throw FormatError("cannot open " + path + " for writing");
    const int written =
        gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
    const bool ok = written == static_cast<int>(bytes.size());
    gzclose(f);
    if (!ok) throw FormatError("gzip write error in " + path);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write error in " + path);
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes,
                        std::size_t offset, const std::string& path) {
  if (offset + 4 > bytes.size()) {
    throw FormatError(path + ": truncated at offset " +
                      std::to_string(offset) + " (need 4 bytes)");
  }
  return (static_cast<std::uint32_t>(bytes[offset]) << 24) |
         (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
         (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) |
         static_cast<std::uint32_t>(bytes[offset + 3]);
}

void append_be32(std::vector<std::uint8_t>& bytes, std::uint32_t v) {
  bytes.push_back(static_cast<std::uint8_t>(v >> 24));
  bytes.push_back(static_cast<std::uint8_t>(v >> 16));
  bytes.push_back(static_cast<std::uint8_t>(v >> 8));
  bytes.push_back(static_cast<std::uint8_t>(v));
}

std::string hex32(std::uint32_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s = "0x";
  for (int shift = 28; shift >= 0; shift -= 4) {
    s.push_back(digits[(v >> shift) & 0xf]);
  }
  return s;
}

void expect_magic(const std::vector<std::uint8_t>& bytes,
                  std::uint32_t expected, const std::string& path) {
  const std::uint32_t magic = read_be32(bytes, 0, path);
  if (magic != expected) {
    throw FormatError(path + ": bad IDX magic at offset 0: expected " +
                      hex32(expected) + ", got " + hex32(magic));
  }
}

}  // namespace

Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path) {
  const std::vector<std::uint8_t> img = read_file_bytes(images_path);
  expect_magic(img, kImageMagic, images_path);
  const std::size_t n = read_be32(img, 4, images_path);
  const std::size_t h = read_be32(img, 8, images_path);
  const std::size_t w = read_be32(img, 12, images_path);
  const std::size_t d = h * w;
  if (img.size() != 16 + n * d) {
    throw FormatError(images_path + ": expected " + std::to_string(16 + n * d) +
                      " bytes for " + std::to_string(n) + "x" +
                      std::to_string(h) + "x" + std::to_string(w) + ", got " +
                      std::to_string(img.size()));
  }

  Dataset ds;
  ds.features = Matrix(n, d);
  double* out = ds.features.data();
  for (std::size_t i = 0; i < n * d; ++i) {
    out[i] = static_cast<double>(img[16 + i]) / 255.0;
  }
  ds.provenance.assign(n, Provenance::kClean);

  if (!labels_path.empty()) {
    const std::vector<std::uint8_t> lab = read_file_bytes(labels_path);
    expect_magic(lab, kLabelMagic, labels_path);
    const std::size_t m = read_be32(lab, 4, labels_path);
    if (lab.size() != 8 + m) {
      throw FormatError(labels_path + ": expected " + std::to_string(8 + m) +
                        " bytes for " + std::to_string(m) + " labels, got " +
                        std::to_string(lab.size()));
    }
    if (m != n) {
      throw FormatError(labels_path + ": " + std::to_string(m) +
                        " labels for " + std::to_string(n) + " images");
    }
    ds.labels.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      ds.labels[i] = static_cast<int>(lab[8 + i]);
    }
  }
  return ds;
}

void write_idx(const Dataset& ds, const std::string& images_path,
               const std::string& labels_path) {
  const std::size_t n = ds.size();
  const std::size_t d = ds.dim();

  std::vector<std::uint8_t> img;
  img.reserve(16 + n * d);
  append_be32(img, kImageMagic);
  append_be32(img, static_cast<std::uint32_t>(n));
  append_be32(img, 1);
  append_be32(img, static_cast<std::uint32_t>(d));
  const double* src = ds.features.data();
  for (std::size_t i = 0; i < n * d; ++i) {
    const double clamped = std::min(1.0, std::max(0.0, src[i]));
    img.push_back(static_cast<std::uint8_t>(std::lround(clamped * 255.0)));
  }
  write_file_bytes(images_path, img);

  if (!labels_path.empty()) {
    if (!ds.has_labels()) {
      throw ParameterError("write_idx: dataset has no labels to write");
    }
    std::vector<std::uint8_t> lab;
    lab.reserve(8 + n);
    append_be32(lab, kLabelMagic);
    append_be32(lab, static_cast<std::uint32_t>(n));
    for (int label : ds.labels) {
      if (label < 0 || label > 255) {
        throw ParameterError("write_idx: label " + std::to_string(label) +
                             " does not fit in a byte");
      }
      lab.push_back(static_cast<std::uint8_t>(label));
    }
    write_file_bytes(labels_path, lab);
  }
}

}  // namespace dpal::data
