#ifndef METRA_IO_H
#define METRA_IO_H

#include <string>

namespace metra {

std::string read_text_file(const std::string& path);

// Writes to a sibling temporary file, then renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace metra

#endif  // METRA_IO_H
