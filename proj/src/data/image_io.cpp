#include "uhal/data/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

// jpeglib.h needs FILE and size_t declared first.
#include <jpeglib.h>

#include "uhal/core/error.hpp"

namespace uhal::data {

std::uint8_t to_u8(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to " + path.string());
}

namespace {

core::Tensor<float> expand_gray(const core::Tensor<float>& g) {
  if (g.dim(2) == 3) return g;
  core::Tensor<float> out({g.dim(0), g.dim(1), 3});
  for (std::size_t i = 0; i < g.dim(0) * g.dim(1); ++i) {
    for (std::size_t c = 0; c < 3; ++c) out[i * 3 + c] = g[i];
  }
  return out;
}

void check_image(const core::Tensor<float>& img, const char* what) {
  if (img.rank() != 3 || (img.dim(2) != 1 && img.dim(2) != 3)) {
    throw ShapeError(std::string(what) + ": expected H x W x 1 or H x W x 3, got " + core::shape_str(img.shape()));
  }
}

}  // namespace

core::Tensor<float> decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw DataError("not a PNG stream");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  struct Src {
    const std::uint8_t* p;
    std::size_t n, off;
  } src{bytes.data(), bytes.size(), 0};
  core::Tensor<float> out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("PNG decode failed");
  }
  png_set_read_fn(png, &src, [](png_structp ps, png_bytep dst, png_size_t len) {
    auto* s = static_cast<Src*>(png_get_io_ptr(ps));
    if (s->off + len > s->n) png_error(ps, "truncated");
    std::memcpy(dst, s->p + s->off, len);
    s->off += len;
  });
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (!(color & PNG_COLOR_MASK_COLOR)) {
    if (depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    png_set_gray_to_rgb(png);
  }
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  if (depth == 16) png_set_swap(png);
  png_read_update_info(png, info);
  const std::size_t h = png_get_image_height(png, info), w = png_get_image_width(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<std::uint8_t> row(rowbytes);
  out = core::Tensor<float>({h, w, 3});
  for (std::size_t r = 0; r < h; ++r) {
    png_read_row(png, row.data(), nullptr);
    float* o = out.ptr() + r * w * 3;
    if (depth == 16) {
      for (std::size_t i = 0; i < w * 3; ++i) {
        std::uint16_t v;
        std::memcpy(&v, row.data() + 2 * i, 2);
        o[i] = v / 65535.0f;
      }
    } else {
      for (std::size_t i = 0; i < w * 3; ++i) o[i] = row[i] / 255.0f;
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

std::vector<std::uint8_t> encode_png(const core::Tensor<float>& img) {
  check_image(img, "encode_png");
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.dim(1));
  image.height = static_cast<png_uint_32>(img.dim(0));
  image.format = img.dim(2) == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> px(img.size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = to_u8(img[i]);
  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(image, size, 0, px.data(), 0, nullptr)) {
    throw DataError(std::string("PNG encode failed: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, px.data(), 0, nullptr)) {
    throw DataError(std::string("PNG encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

namespace {

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void on_jpeg_error(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

}  // namespace

std::vector<std::uint8_t> encode_jpeg(const core::Tensor<float>& img, int quality) {
  check_image(img, "encode_jpeg");
  if (quality < 1 || quality > 100) throw ShapeError("encode_jpeg: quality must be in 1..100");
  const std::size_t h = img.dim(0), w = img.dim(1), c = img.dim(2);
  std::vector<std::uint8_t> px(img.size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = to_u8(img[i]);

  jpeg_compress_struct cinfo;
  JpegError err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = on_jpeg_error;
  unsigned char* mem = nullptr;
  unsigned long mem_size = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    std::free(mem);
    throw DataError(std::string("JPEG encode failed: ") + err.message);
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &mem, &mem_size);
  cinfo.image_width = static_cast<JDIMENSION>(w);
  cinfo.image_height = static_cast<JDIMENSION>(h);
  cinfo.input_components = static_cast<int>(c);
  cinfo.in_color_space = c == 3 ? JCS_RGB : JCS_GRAYSCALE;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = px.data() + static_cast<std::size_t>(cinfo.next_scanline) * w * c;
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  std::vector<std::uint8_t> out(mem, mem + mem_size);
  jpeg_destroy_compress(&cinfo);
  std::free(mem);
  return out;
}

core::Tensor<float> decode_jpeg(std::span<const std::uint8_t> bytes) {
  jpeg_decompress_struct cinfo;
  JpegError err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = on_jpeg_error;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw DataError(std::string("JPEG decode failed: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  if (cinfo.num_components != 1) cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  const std::size_t h = cinfo.output_height, w = cinfo.output_width, c = cinfo.output_components;
  std::vector<std::uint8_t> px(h * w * c);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = px.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * c;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  core::Tensor<float> out({h, w, c});
  for (std::size_t i = 0; i < px.size(); ++i) out[i] = px[i] / 255.0f;
  return out;
}

core::Tensor<float> read_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    if (bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0) return decode_png(bytes);
    if (bytes.size() >= 2 && bytes[0] == 0xFF && bytes[1] == 0xD8) return expand_gray(decode_jpeg(bytes));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  throw DataError(path.string() + ": not a PNG or JPEG file");
}

void write_png(const std::filesystem::path& path, const core::Tensor<float>& img) {
  write_file(path, encode_png(img));
}

}  // namespace uhal::data
