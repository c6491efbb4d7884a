// Copyright 2026 The GRACE Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cerrno>
#include <csignal>
#include <cstring>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include "grace/error.hpp"
#include "grace/oracle.hpp"

namespace grace {
namespace {

void close_fd(int &fd) {
  if (fd >= 0) {
    ::close(fd);
    fd = -1;
  }
}

} // namespace

ExternalEvaluator::ExternalEvaluator(EvaluatorOptions options)
    : options_(std::move(options)) {
  if (options_.command.empty())
    throw ValidationError("evaluator command is empty");
  launch();
}

ExternalEvaluator::~ExternalEvaluator() { shutdown(); }

void ExternalEvaluator::launch() {
  int in_pipe[2], out_pipe[2], err_pipe[2];
  if (::pipe(in_pipe) != 0 || ::pipe(out_pipe) != 0 || ::pipe(err_pipe) != 0)
    throw EvaluatorError("pipe() failed: " + std::string(std::strerror(errno)));

  pid_t pid = ::fork();
  if (pid < 0)
    throw EvaluatorError("fork() failed: " + std::string(std::strerror(errno)));

  if (pid == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::dup2(err_pipe[1], STDERR_FILENO);
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1],
                   err_pipe[0], err_pipe[1]})
      ::close(fd);
    std::vector<char *> argv;
    for (auto &s : options_.command)
      argv.push_back(s.data());
    argv.push_back(nullptr);
    ::execvp(argv[0], argv.data());
    ::_exit(127);
  }

  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  err_child_ = err_pipe[0];
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  ::close(err_pipe[1]);
  ::fcntl(err_child_, F_SETFL, O_NONBLOCK);
  // The client must survive a dead child long enough to report it.
  ::signal(SIGPIPE, SIG_IGN);
}

bool ExternalEvaluator::child_alive() {
  if (pid_ < 0)
    return false;
  int status = 0;
  pid_t r = ::waitpid(static_cast<pid_t>(pid_), &status, WNOHANG);
  if (r == static_cast<pid_t>(pid_)) {
    pid_ = -1;
    return false;
  }
  return true;
}

std::string ExternalEvaluator::drain_stderr() {
  std::string out;
  char buf[4096];
  while (err_child_ >= 0) {
    ssize_t n = ::read(err_child_, buf, sizeof(buf));
    if (n <= 0)
      break;
    out.append(buf, static_cast<std::size_t>(n));
  }
  return out;
}

bool ExternalEvaluator::read_line(std::string &line,
                                  std::chrono::milliseconds timeout) {
  auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return true;
    }
    auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (remaining.count() <= 0)
      return false;
    struct pollfd pfd{from_child_, POLLIN, 0};
    int pr = ::poll(&pfd, 1, static_cast<int>(remaining.count()));
    if (pr == 0)
      return false;
    if (pr < 0) {
      if (errno == EINTR)
        continue;
      throw EvaluatorError("poll() failed: " +
                           std::string(std::strerror(errno)));
    }
    char buf[4096];
    ssize_t n = ::read(from_child_, buf, sizeof(buf));
    if (n == 0)
      throw EvaluatorError("evaluator closed its output; stderr: " +
                           drain_stderr());
    if (n < 0) {
      if (errno == EINTR)
        continue;
      throw EvaluatorError("read() failed: " +
                           std::string(std::strerror(errno)));
    }
    buffer_.append(buf, static_cast<std::size_t>(n));
  }
}

UtilityResult ExternalEvaluator::evaluate(const UtilityQuery &query) {
  ++calls_;
  nlohmann::json request{{"concept", query.concept_name},
                         {"model", query.model_name},
                         {"vector_path", query.vector_path.string()},
                         {"layer", query.layer},
                         {"coefficient", query.coefficient},
                         {"seed", query.seed}};
  std::string line = request.dump() + "\n";

  std::string last_error;
  for (int attempt = 0; attempt <= options_.retries; ++attempt) {
    if (attempt > 0)
      ++retries_used_;
    if (!child_alive())
      throw EvaluatorError("evaluator process died; stderr: " +
                           drain_stderr());
    ssize_t w = ::write(to_child_, line.data(), line.size());
    if (w != static_cast<ssize_t>(line.size()))
      throw EvaluatorError("failed to write request to evaluator; stderr: " +
                           drain_stderr());

    std::string response;
    if (!read_line(response, options_.timeout)) {
      last_error = "timeout waiting for evaluator response";
      continue;
    }
    try {
      auto j = nlohmann::json::parse(response);
      if (!j.contains("concept_score") || !j.contains("coherence"))
        throw ProtocolError("evaluator response missing concept_score or "
                            "coherence: " +
                            response);
      double cs = j.at("concept_score").get<double>();
      double coh = j.at("coherence").get<double>();
      if (cs < 0.0 || cs > 100.0 || coh < 0.0 || coh > 100.0)
        throw ProtocolError("evaluator score out of [0,100]: " + response);
      return UtilityResult::from_scores(cs, coh);
    } catch (const nlohmann::json::exception &e) {
      last_error = std::string("malformed evaluator response: ") + e.what();
      continue;
    } catch (const ProtocolError &e) {
      // Hard contract violations are not retried as-is; the range check is a
      // protocol error, not a transport hiccup.
      throw;
    }
  }
  if (last_error.find("timeout") != std::string::npos)
    throw EvaluatorError(last_error + " after " +
                         std::to_string(options_.retries) + " retries");
  throw ProtocolError(last_error + " after " +
                      std::to_string(options_.retries) + " retries");
}

void ExternalEvaluator::shutdown() noexcept {
  if (to_child_ >= 0) {
    static const char msg[] = "{\"shutdown\": true}\n";
    [[maybe_unused]] ssize_t w = ::write(to_child_, msg, sizeof(msg) - 1);
  }
  close_fd(to_child_);
  close_fd(from_child_);
  close_fd(err_child_);
  if (pid_ > 0) {
    int status = 0;
    for (int i = 0; i < 50; ++i) {
      if (::waitpid(static_cast<pid_t>(pid_), &status, WNOHANG) != 0) {
        pid_ = -1;
        return;
      }
      ::usleep(20000);
    }
    ::kill(static_cast<pid_t>(pid_), SIGKILL);
    ::waitpid(static_cast<pid_t>(pid_), &status, 0);
    pid_ = -1;
  }
}

} // namespace grace
