#pragma once

#define VOTERAG_VERSION "0.1.0"
