#include <algorithm>
#include <cctype>

#include <openssl/crypto.h>
#include <openssl/evp.h>

#include "pibase/broker.hpp"

namespace pibase::broker {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

Bytes derive(std::string_view password, std::span<const std::uint8_t> salt, int iterations) {
    Bytes out(32);
    if (PKCS5_PBKDF2_HMAC(password.data(), static_cast<int>(password.size()), salt.data(),
                          static_cast<int>(salt.size()), iterations, EVP_sha256(), static_cast<int>(out.size()),
                          out.data()) != 1) {
        throw Error("PBKDF2 failed");
    }
    return out;
}

Bytes from_hex(std::string_view hex) {
    if (hex.size() % 2 != 0) throw FormatError("odd-length hex string");
    Bytes out(hex.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<std::uint8_t>(std::stoi(std::string(hex.substr(2 * i, 2)), nullptr, 16));
    }
    return out;
}

}  // namespace

bool valid_email(std::string_view email) {
    if (email.size() > 254) return false;
    const auto at = email.find('@');
    if (at == std::string_view::npos || at == 0 || email.find('@', at + 1) != std::string_view::npos) return false;
    const auto domain = email.substr(at + 1);
    const auto dot = domain.find('.');
    if (domain.empty() || dot == std::string_view::npos || dot == 0 || domain.back() == '.') return false;
    if (domain.find("..") != std::string_view::npos) return false;
    return std::none_of(email.begin(), email.end(),
                        [](unsigned char c) { return c <= 0x20 || c == 0x7f || c == '/' || c == '\\'; });
}

Auth::Auth(Database& db, AuthConfig config, WallClock clock)
    : db_(db), config_(config), clock_(std::move(clock)) {}

std::string Auth::register_user(std::string_view email, std::string_view password, std::string_view name) {
    if (!valid_email(email)) throw ArgumentError("invalid email address");
    if (password.size() < config_.min_password) {
        throw ArgumentError("password must be at least " + std::to_string(config_.min_password) + " characters");
    }
    std::lock_guard lock(mu_);
    const auto key = lower(email);
    const auto accounts = db_.get(std::string("/") + std::string(kAccountsRoot));
    if (accounts.is_object()) {
        for (const auto& [uid, acct] : accounts.items()) {
            if (acct.value("email_key", "") == key) throw ConflictError("email already registered");
        }
    }
    const auto uid = to_hex(random_bytes(10));
    const auto salt = random_bytes(16);
    db_.set(std::string("/") + std::string(kAccountsRoot) + "/" + uid,
            {{"uid", uid},
             {"name", std::string(name)},
             {"email", std::string(email)},
             {"email_key", key},
             {"salt", to_hex(salt)},
             {"iterations", config_.pbkdf2_iterations},
             {"digest", to_hex(derive(password, salt, config_.pbkdf2_iterations))},
             {"created_at", format_iso(clock_())}});
    return uid;
}

Session Auth::login(std::string_view email, std::string_view password) {
    const auto key = lower(email);
    const auto accounts = db_.get(std::string("/") + std::string(kAccountsRoot));
    json account;
    if (accounts.is_object()) {
        for (const auto& [uid, acct] : accounts.items()) {
            if (acct.value("email_key", "") == key) account = acct;
        }
    }
    bool ok = false;
    if (account.is_object()) {
        const auto salt = from_hex(account.at("salt").get<std::string>());
        const auto expected = from_hex(account.at("digest").get<std::string>());
        const auto got = derive(password, salt, account.at("iterations").get<int>());
        ok = expected.size() == got.size() && CRYPTO_memcmp(expected.data(), got.data(), got.size()) == 0;
    } else {
        // Same work for unknown accounts.
        const Bytes salt(16, 0);
        derive(password, salt, config_.pbkdf2_iterations);
    }
    if (!ok) throw AuthError("invalid email or password");
    return issue_service_token(account.at("uid").get<std::string>());
}

Session Auth::issue_service_token(std::string_view uid) {
    Session s{to_hex(random_bytes(32)), std::string(uid), clock_() + config_.token_ttl};
    std::lock_guard lock(sessions_mu_);
    sessions_[s.token] = s;
    return s;
}

std::string Auth::authenticate(std::string_view token) const {
    std::lock_guard lock(sessions_mu_);
    const auto it = sessions_.find(token);
    if (it == sessions_.end()) throw AuthError("invalid token");
    if (clock_() >= it->second.expires_at) throw AuthError("token expired");
    return it->second.uid;
}

}  // namespace pibase::broker
