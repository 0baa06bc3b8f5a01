// Copyright 2026 The madaug Authors.
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

#pragma once

namespace madaug {

/// Keeps freed memory in the heap instead of returning it to the OS. Training
/// allocates many short-lived multi-megabyte temporaries; with glibc's default
/// mmap threshold each one costs fresh page faults. No-op off glibc. Call once
/// at program start.
void tune_allocator();

}  // namespace madaug
