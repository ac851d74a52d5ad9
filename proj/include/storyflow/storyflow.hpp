#pragma once

#include "storyflow/content.hpp"
#include "storyflow/course_dir.hpp"
#include "storyflow/engine.hpp"
#include "storyflow/flow_model.hpp"
#include "storyflow/interpreter.hpp"
#include "storyflow/journal.hpp"
#include "storyflow/lms.hpp"
#include "storyflow/player.hpp"
#include "storyflow/policy.hpp"
#include "storyflow/presenters.hpp"
#include "storyflow/snapshot.hpp"
