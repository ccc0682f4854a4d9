#pragma once

#include <string>
#include <string_view>

namespace cgt {

std::string sha1_hex(std::string_view bytes);

// Same digest git assigns to a blob with this content.
std::string git_blob_hash(std::string_view content);

}  // namespace cgt
