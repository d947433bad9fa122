#include "genvideo/io.hpp"

#include "genvideo/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace genvideo {

namespace {

std::string next_token(std::istream& in) {
  std::string tok;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(c);
  }
  return tok;
}

int header_int(std::istream& in, const std::filesystem::path& path, const char* what) {
  const std::string tok = next_token(in);
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used == tok.size()) return v;
  } catch (const std::exception&) {
  }
  throw io_error(path.string() + ": bad " + what + " '" + tok + "'");
}

bool is_frame_file(const std::filesystem::path& p) {
  const std::string ext = p.extension().string();
  return ext == ".pgm" || ext == ".ppm" || ext == ".pam";
}

}  // namespace

Tensor4d read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string());
  const std::string magic = next_token(in);
  int width = 0, height = 0, channels = 0, maxval = 0;
  if (magic == "P5" || magic == "P6") {
    width = header_int(in, path, "width");
    height = header_int(in, path, "height");
    maxval = header_int(in, path, "maxval");
    channels = magic == "P5" ? 1 : 3;
  } else if (magic == "P7") {
    for (;;) {
      const std::string key = next_token(in);
      if (key.empty()) throw io_error(path.string() + ": truncated PAM header");
      if (key == "ENDHDR") break;
      if (key == "WIDTH") width = header_int(in, path, "WIDTH");
      else if (key == "HEIGHT") height = header_int(in, path, "HEIGHT");
      else if (key == "DEPTH") channels = header_int(in, path, "DEPTH");
      else if (key == "MAXVAL") maxval = header_int(in, path, "MAXVAL");
      else if (key == "TUPLTYPE") next_token(in);
      else throw io_error(path.string() + ": unknown PAM header field '" + key + "'");
    }
  } else {
    throw io_error(path.string() + ": unsupported image format (expected P5, P6 or P7)");
  }
  if (width < 1 || height < 1 || channels < 1 || channels > 4) {
    throw io_error(path.string() + ": bad image dimensions");
  }
  if (maxval != 255) throw io_error(path.string() + ": only 8-bit images are supported");

  std::vector<unsigned char> bytes(static_cast<std::size_t>(width) * height * channels);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw io_error(path.string() + ": truncated pixel data");
  }
  Tensor4d out(1, channels, height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        out(0, c, y, x) = bytes[(static_cast<std::size_t>(y) * width + x) * channels + c] / 255.0;
      }
    }
  }
  return out;
}

void write_image(const Tensor4d& t, Index n, const std::filesystem::path& path) {
  const Index channels = t.channels();
  const Index h = t.height();
  const Index w = t.width();
  if (channels < 1 || channels > 4) throw io_error("write_image: unsupported channel count");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write " + path.string());
  if (channels == 1) {
    out << "P5\n" << w << " " << h << "\n255\n";
  } else if (channels == 3) {
    out << "P6\n" << w << " " << h << "\n255\n";
  } else {
    out << "P7\nWIDTH " << w << "\nHEIGHT " << h << "\nDEPTH " << channels
        << "\nMAXVAL 255\nTUPLTYPE " << (channels == 2 ? "GRAYSCALE_ALPHA" : "RGB_ALPHA")
        << "\nENDHDR\n";
  }
  std::vector<unsigned char> bytes(static_cast<std::size_t>(h * w * channels));
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      for (Index c = 0; c < channels; ++c) {
        const double v = std::clamp(t(n, c, y, x), 0.0, 1.0);
        bytes[static_cast<std::size_t>((y * w + x) * channels + c)] =
            static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw io_error("failed writing " + path.string());
}

std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw io_error("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && is_frame_file(e.path())) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

FrameVideo read_frame_dir(const std::filesystem::path& dir) {
  const auto files = list_frames(dir);
  if (files.empty()) throw io_error("no .pgm/.ppm/.pam frames in " + dir.string());
  FrameVideo video;
  for (std::size_t i = 0; i < files.size(); ++i) {
    const Tensor4d img = read_image(files[i]);
    if (i == 0) {
      video.frames = Tensor4d(static_cast<Index>(files.size()), img.channels(), img.height(), img.width());
    } else if (img.channels() != video.frames.channels() || img.height() != video.frames.height() ||
               img.width() != video.frames.width()) {
      throw io_error(files[i].string() + ": frame " + img.shape_string() +
                     " differs from the first frame");
    }
    video.frames.set_frame(static_cast<Index>(i), img);
  }
  return video;
}

std::vector<std::filesystem::path> write_frame_dir(const Tensor4d& frames,
                                                   const std::filesystem::path& dir,
                                                   const std::string& prefix) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw io_error("cannot create " + dir.string() + ": " + ec.message());
  const char* ext = frames.channels() == 1 ? "pgm" : frames.channels() == 3 ? "ppm" : "pam";
  std::vector<std::filesystem::path> paths;
  for (Index n = 0; n < frames.frames(); ++n) {
    char name[64];
    std::snprintf(name, sizeof name, "%s_%04ld.%s", prefix.c_str(), static_cast<long>(n), ext);
    paths.push_back(dir / name);
    write_image(frames, n, paths.back());
  }
  return paths;
}

}  // namespace genvideo
