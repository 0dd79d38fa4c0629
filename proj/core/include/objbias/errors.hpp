#pragma once

#include <stdexcept>
#include <string>

namespace objbias {

/// Base for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration (CLI exit status 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An input violates an operation's precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A stage needs an artifact that an earlier stage has not produced.
class MissingArtifactError : public Error {
 public:
  explicit MissingArtifactError(std::string path)
      : Error("missing upstream artifact: " + path), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// A required credential environment variable is unset or was rejected.
class CredentialError : public Error {
 public:
  CredentialError(std::string env_var, const std::string& what)
      : Error(what), env_var_(std::move(env_var)) {}
  const std::string& env_var() const noexcept { return env_var_; }

 private:
  std::string env_var_;
};

/// Transport-level or server-side failure that may succeed on retry.
class TransientError : public Error {
 public:
  using Error::Error;
};

/// The remote service refused the request on policy grounds; never retried.
class ContentPolicyError : public Error {
 public:
  using Error::Error;
};

/// A model response could not be interpreted; carries the raw text for audit.
class ResponseFormatError : public Error {
 public:
  ResponseFormatError(const std::string& what, std::string raw)
      : Error(what), raw_(std::move(raw)) {}
  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

}  // namespace objbias
