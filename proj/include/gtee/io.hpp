#pragma once

#include <filesystem>
#include <string>

namespace gtee {

// Writes via a temporary sibling and rename, so readers never see a partial file.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace gtee
