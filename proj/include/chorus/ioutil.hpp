#pragma once

#include <string>

namespace chorus {

// Whole-file helpers. Writes go through a temp file in the same directory
// followed by a rename, so readers never observe partial output.
std::string read_text_file(const std::string& path);
void atomic_write_file(const std::string& path, const std::string& content);

}  // namespace chorus
