// Copyright 2026 The spatialsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>

#include "spatialsep/tensor.hpp"

namespace spatialsep {

// RIFF/WAVE, little-endian. Reads PCM-16 (scaled to [-1,1) by 1/32768) and
// IEEE float-32; writes float-32. Malformed or unsupported content raises
// DataError with a "malformed WAV" prefix.
MultiChannelSignal read_wav(const std::string& path);
void write_wav(const std::string& path, const MultiChannelSignal& signal);

}  // namespace spatialsep
