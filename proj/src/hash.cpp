// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "dorf/hash.hpp"

#include "binary_io.hpp"
#include "dorf/error.hpp"

#include <openssl/evp.h>

#include <memory>

namespace dorf {

namespace {

std::string digest(const void* data, std::size_t size) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    unsigned char out[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), data, size) != 1 || EVP_DigestFinal_ex(ctx.get(), out, &len) != 1) {
        throw NumericError("SHA-256 digest failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string s(2 * len, '0');
    for (unsigned int i = 0; i < len; ++i) {
        s[2 * i] = hex[out[i] >> 4];
        s[2 * i + 1] = hex[out[i] & 15];
    }
    return s;
}

} // namespace

std::string sha256_hex(std::string_view data) { return digest(data.data(), data.size()); }

std::string sha256_file(const std::filesystem::path& path) {
    const auto bytes = detail::read_file(path);
    return digest(bytes.data(), bytes.size());
}

} // namespace dorf
