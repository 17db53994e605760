#pragma once

// Built-in copies of the text assets under assets/. Tests check they match.

#include <string_view>

namespace dive::assets {

inline constexpr std::string_view kDegreeLexicon = R"TSV(# stem	grade
# A prompt's degree is the highest grade among tokens that start with a stem;
# prompts with no match get 2. Tokens are lowercase runs of letters.
still	1
static	1
motionless	1
stationar	1
sit	1
quiet	1
calm	1
rest	1
sleep	1
lying	1
stand	1
idle	1
pose	1
portrait	1
frozen	1
serene	1
gentl	2
slow	2
breez	2
drift	2
sway	2
float	2
blink	2
smil	2
breath	2
ripple	2
flicker	2
glow	2
walk	3
turn	3
wave	3
pour	3
cook	3
talk	3
play	3
swim	3
stir	3
paint	3
ride	3
riding	3
driv	3
flow	3
run	4
jump	4
danc	4
fly	4
fight	4
chas	4
gallop	4
splash	4
spin	4
throw	4
kick	4
race	4
racing	4
climb	4
surf	4
explod	5
explos	5
erupt	5
violent	5
storm	5
tornado	5
collaps	5
crash	5
shatter	5
burst	5
avalanche	5
tsunami	5
stampede	5
)TSV";

inline constexpr std::string_view kDegreeRequestTemplate = R"TXT(You rate how much motion a short video generated from an image and a text prompt should contain.
Answer with a dynamic degree on an integer scale from 1 to 5:
1 = nearly static (subtle changes only)
2 = small motion (gentle movement of a few elements)
3 = moderate motion (clear subject or camera movement)
4 = large motion (fast or wide-ranging movement)
5 = extreme motion (violent, chaotic or whole-scene movement)
Consider subject motion and camera motion together.
Reply with the integer first, then an optional short reason.

Prompt: {prompt}
Image: {image}
)TXT";

// Captioning prompt for the multimodal model; shipped for reference, not used in scoring.
inline constexpr std::string_view kCaptionPrompt = R"TXT(Describe the video by detailing the following aspects:
1. The main content and theme of the video.
2. The color, shape, size, texture, quantity, text, and spatial relationships of the objects.
3. Actions, events, behaviors temporal relationships, physical movement changes of the objects.
4. Background environment, light, style and atmosphere.
5. Camera angles, movements, and transitions used in the video.
Please provide the output in a non-structured way and keep it in one line: {text}
)TXT";

}  // namespace dive::assets
