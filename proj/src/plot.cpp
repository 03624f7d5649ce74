#include "gcdf/plot.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>

#include "gcdf/errors.hpp"

namespace gcdf {

namespace {

void put_be32(std::string& out, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

// PNG chunk: length, type, data, CRC over type+data.
void put_chunk(std::string& out, const char type[5], const std::string& data) {
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t crc_start = out.size();
  out += type;
  out += data;
  const auto crc = crc32(0, reinterpret_cast<const Bytef*>(out.data() + crc_start),
                         static_cast<uInt>(out.size() - crc_start));
  put_be32(out, static_cast<std::uint32_t>(crc));
}

struct Rgb {
  std::uint8_t r, g, b;
};

Rgb hue_color(int index) {
  // Golden-angle hops around the hue wheel keep consecutive labels distinct.
  const double h = std::fmod(static_cast<double>(index) * 137.50776405003785, 360.0) / 60.0;
  const double x = 1.0 - std::fabs(std::fmod(h, 2.0) - 1.0);
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(h)) {
    case 0: r = 1; g = x; break;
    case 1: r = x; g = 1; break;
    case 2: g = 1; b = x; break;
    case 3: g = x; b = 1; break;
    case 4: r = x; b = 1; break;
    default: r = 1; b = x; break;
  }
  const double value = 0.82, floor_c = 0.10;
  auto channel = [&](double c) {
    return static_cast<std::uint8_t>(std::lround((floor_c + c * (value - floor_c)) * 255.0));
  };
  return {channel(r), channel(g), channel(b)};
}

}  // namespace

void write_scatter_png(const std::string& path, const TensorT<double>& points,
                       const std::vector<i64>& labels, const std::vector<std::uint8_t>& observed,
                       int size) {
  const i64 n = points.rows();
  if (points.cols() != 2) throw contract_error("scatter plot expects 2-D points, got " + points.shape_str());
  if (labels.size() != static_cast<std::size_t>(n))
    throw contract_error("scatter plot: labels must cover all points");
  if (!observed.empty() && observed.size() != static_cast<std::size_t>(n))
    throw contract_error("scatter plot: observed flags must cover all points");
  if (size < 64) throw contract_error("scatter plot: size too small");

  std::map<i64, int> color_of;
  for (i64 l : labels) color_of.try_emplace(l, static_cast<int>(color_of.size()));

  const int w = size, h = size;
  std::vector<std::uint8_t> img(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3, 255);
  auto paint = [&](int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= w || y >= h) return;
    const std::size_t o = (static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)) * 3;
    img[o] = c.r;
    img[o + 1] = c.g;
    img[o + 2] = c.b;
  };

  const Rgb frame{200, 200, 200};
  for (int x = 0; x < w; ++x) {
    paint(x, 0, frame);
    paint(x, h - 1, frame);
  }
  for (int y = 0; y < h; ++y) {
    paint(0, y, frame);
    paint(w - 1, y, frame);
  }

  const int margin = 12;
  const double span = static_cast<double>(size - 2 * margin);
  for (i64 i = 0; i < n; ++i) {
    const double px = std::clamp(points.at(i, 0), -1.0, 1.0);
    const double py = std::clamp(points.at(i, 1), -1.0, 1.0);
    const int cx = margin + static_cast<int>(std::lround((px + 1.0) / 2.0 * span));
    const int cy = margin + static_cast<int>(std::lround((1.0 - py) / 2.0 * span));
    const Rgb c = hue_color(color_of[labels[static_cast<std::size_t>(i)]]);
    const bool hollow = !observed.empty() && !observed[static_cast<std::size_t>(i)];
    for (int dy = -2; dy <= 2; ++dy)
      for (int dx = -2; dx <= 2; ++dx) {
        if (std::abs(dx) + std::abs(dy) > 3) continue;  // rounded marker
        if (hollow && std::abs(dx) + std::abs(dy) < 2) continue;
        paint(cx + dx, cy + dy, c);
      }
  }

  std::string raw;
  raw.reserve(static_cast<std::size_t>(h) * (static_cast<std::size_t>(w) * 3 + 1));
  for (int y = 0; y < h; ++y) {
    raw.push_back('\0');  // filter 0: none
    raw.append(reinterpret_cast<const char*>(img.data() + static_cast<std::size_t>(y) * static_cast<std::size_t>(w) * 3),
               static_cast<std::size_t>(w) * 3);
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::string compressed(bound, '\0');
  if (compress2(reinterpret_cast<Bytef*>(compressed.data()), &bound,
                reinterpret_cast<const Bytef*>(raw.data()), static_cast<uLong>(raw.size()),
                6) != Z_OK)
    throw io_error("png compression failed for " + path);
  compressed.resize(bound);

  std::string out("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  put_be32(ihdr, static_cast<std::uint32_t>(w));
  put_be32(ihdr, static_cast<std::uint32_t>(h));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // color type: truecolor
  ihdr.push_back(0);   // compression
  ihdr.push_back(0);   // filter
  ihdr.push_back(0);   // interlace
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", compressed);
  put_chunk(out, "IEND", "");

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw io_error("cannot open " + path + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw io_error("write failed for " + path);
}

}  // namespace gcdf
