#pragma once

#include "genvideo/types.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace genvideo {

/// Reads a binary PGM (P5), PPM (P6) or PAM (P7) image with maxval 255 as a
/// [1, C, H, W] tensor scaled to [0, 1].
Tensor4d read_image(const std::filesystem::path& path);

/// Writes frame `n` of `t` as PGM (1 channel), PPM (3 channels) or PAM
/// (2 or 4 channels). Values are clamped to [0, 1] and rounded to 8 bits.
void write_image(const Tensor4d& t, Index n, const std::filesystem::path& path);

/// Image files (.pgm/.ppm/.pam) of a directory in lexicographic order.
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir);

/// Loads all frames of a directory; they must share size and channel count.
FrameVideo read_frame_dir(const std::filesystem::path& dir);

/// Writes <dir>/<prefix>_0000.<ext>, ... and returns the paths.
std::vector<std::filesystem::path> write_frame_dir(const Tensor4d& frames,
                                                   const std::filesystem::path& dir,
                                                   const std::string& prefix);

}  // namespace genvideo
