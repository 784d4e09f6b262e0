#pragma once

namespace scalechain {

// Exit codes: 0 success, 1 usage, 2 data error, 3 external-tool failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitExternal = 3;

int dispatch(int argc, char** argv);

}  // namespace scalechain
