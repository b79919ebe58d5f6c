#pragma once

#define CLSPEC_VERSION "0.1.0"
