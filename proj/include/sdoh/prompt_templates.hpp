#pragma once

#include <string_view>

namespace sdoh {

// Built-in copies of the shipped prompt template files (prompts/few_shot.txt
// and prompts/train.txt). The library never needs the files at runtime; the
// test suite asserts file and builtin stay byte-identical.
std::string_view builtin_few_shot_prompt();
std::string_view builtin_train_prompt();

}  // namespace sdoh
