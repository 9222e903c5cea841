#pragma once

#include <string>

#include "chorus/types.hpp"

namespace chorus {

// Reads a RIFF/WAVE file. Accepts PCM 16-bit and IEEE float 32-bit samples,
// mono or stereo; stereo is downmixed by channel averaging. Throws
// std::runtime_error with a descriptive message on malformed input.
Waveform read_wav(const std::string& path);

// Writes mono 16-bit PCM. Samples are clamped to [-1, 1] before quantizing.
void write_wav(const std::string& path, const Waveform& w);

}  // namespace chorus
