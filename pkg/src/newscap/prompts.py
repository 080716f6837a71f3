"""Versioned prompt templates for the external caption generator.

The wording is part of the pipeline's contract with the generation model;
treat any change as a new version.
"""

PROMPT_VERSION = "v1"

SYSTEM_PROMPT = (
    "You are an expert journalistic assistant tasked with creating detailed "
    "and informative image captions.\n"
    "Your goal is to combine information from image descriptions and the "
    "information of an article (from sources like The Guardian or CNN) into "
    "a single, enriched caption.\n"
    "The image sometimes seems irrelevant to the article, but try to use the "
    "context given by the article to generate an appropriate caption.\n"
    "Example: an article talking about a tennis event in the Olympics, but "
    "the photo is about the swimming event in the same Olympics. You need to "
    "take the scenario of the Olympics to generate the caption for the image "
    "relating to swimming.\n"
    "The output must be plain text without any formatting. The language of "
    "the caption MUST BE in English.\n"
    "The number of words of a caption should be from 100 to 140 words."
)

USER_PROMPT_TEMPLATE = (
    "Create a detailed caption by combining both the image caption and the "
    "information of the article I provide.\n"
    "Only return plain text with no formatting:\n"
    "\n"
    "The image description:\n"
    "{generic_caption}\n"
    "\n"
    "The image caption from the article:\n"
    "{web_caption}\n"
    "\n"
    "The summary of the article:\n"
    "Title: {title}\n"
    "{summary}"
)

MISSING_WEB_CAPTION = "None"
