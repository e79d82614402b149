#include "labelforge/image.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include <png.h>

#include "labelforge/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "image serialization assumes a little-endian host");

namespace labelforge {

namespace {

constexpr char kLfimMagic[4] = {'L', 'F', 'I', 'M'};
constexpr std::uint32_t kLfimVersion = 1;

void check_image(const Tensor& image) {
  if (image.rank() != 3) throw InputError("image tensor must be rank-3 HWC");
}

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  if (!is) throw FormatError("image file truncated");
  return v;
}

}  // namespace

void write_lfim(const std::string& path, const Tensor& image) {
  check_image(image);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open image for writing: " + path);
  os.write(kLfimMagic, 4);
  write_u32(os, kLfimVersion);
  write_u32(os, static_cast<std::uint32_t>(image.dim(0)));
  write_u32(os, static_cast<std::uint32_t>(image.dim(1)));
  write_u32(os, static_cast<std::uint32_t>(image.dim(2)));
  os.write(reinterpret_cast<const char*>(image.data()),
           static_cast<std::streamsize>(image.size() * sizeof(float)));
  if (!os) throw IoError("image write failed: " + path);
}

Tensor read_lfim(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open image: " + path);
  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kLfimMagic, 4) != 0)
    throw FormatError("not a raw tensor image (bad magic): " + path);
  std::uint32_t version = read_u32(is);
  if (version != kLfimVersion)
    throw FormatError("unsupported raw image version " +
                      std::to_string(version));
  int h = static_cast<int>(read_u32(is));
  int w = static_cast<int>(read_u32(is));
  int c = static_cast<int>(read_u32(is));
  if (h <= 0 || w <= 0 || c <= 0)
    throw FormatError("raw image has degenerate dimensions: " + path);
  Tensor out({h, w, c});
  is.read(reinterpret_cast<char*>(out.data()),
          static_cast<std::streamsize>(out.size() * sizeof(float)));
  if (!is) throw FormatError("image file truncated: " + path);
  for (std::size_t i = 0; i < out.size(); ++i)
    if (!(out[i] >= 0.f && out[i] <= 1.f))
      throw FormatError("raw image pixel outside [0,1]: " + path);
  return out;
}

Tensor read_png(const std::string& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw FormatError(std::string("png read failed: ") + img.message);
  bool gray = (img.format & PNG_FORMAT_FLAG_COLOR) == 0;
  img.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  int channels = gray ? 1 : 3;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw FormatError(std::string("png decode failed: ") + img.message);
  }
  Tensor out({static_cast<int>(img.height), static_cast<int>(img.width),
              channels});
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<float>(buf[i]) / 255.f;
  return out;
}

void write_png(const std::string& path, const Tensor& image) {
  check_image(image);
  int c = image.dim(2);
  if (c != 1 && c != 3)
    throw InputError("png output supports 1 or 3 channels");
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.dim(1));
  img.height = static_cast<png_uint_32>(image.dim(0));
  img.format = c == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) {
    float v = image[i];
    v = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
    buf[i] = static_cast<std::uint8_t>(std::lround(v * 255.f));
  }
  if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr))
    throw IoError(std::string("png write failed: ") + img.message);
}

Tensor read_image(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open image: " + path);
  char magic[4] = {};
  is.read(magic, 4);
  if (is && std::memcmp(magic, kLfimMagic, 4) == 0) {
    is.close();
    return read_lfim(path);
  }
  const unsigned char png_sig[4] = {0x89, 'P', 'N', 'G'};
  if (is && std::memcmp(magic, png_sig, 4) == 0) {
    is.close();
    return read_png(path);
  }
  throw FormatError("unrecognized image format: " + path);
}

}  // namespace labelforge
