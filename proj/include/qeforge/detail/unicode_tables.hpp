// Generated by tools/gen_unicode_tables.py from Unicode 13.0.0. Do not edit.
#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace qeforge::detail {

struct CodepointRange {
  char32_t first;
  char32_t last;
};

struct LowerMapping {
  char32_t codepoint;
  std::string_view utf8;
};

inline constexpr std::string_view kUnicodeVersion = "13.0.0";

inline constexpr std::array<CodepointRange, 331> kPunctSymbolRanges{{
    {0x21, 0x2F},
    {0x3A, 0x40},
    {0x5B, 0x60},
    {0x7B, 0x7E},
    {0xA1, 0xA9},
    {0xAB, 0xAC},
    {0xAE, 0xB1},
    {0xB4, 0xB4},
    {0xB6, 0xB8},
    {0xBB, 0xBB},
    {0xBF, 0xBF},
    {0xD7, 0xD7},
    {0xF7, 0xF7},
    {0x2C2, 0x2C5},
    {0x2D2, 0x2DF},
    {0x2E5, 0x2EB},
    {0x2ED, 0x2ED},
    {0x2EF, 0x2FF},
    {0x375, 0x375},
    {0x37E, 0x37E},
    {0x384, 0x385},
    {0x387, 0x387},
    {0x3F6, 0x3F6},
    {0x482, 0x482},
    {0x55A, 0x55F},
    {0x589, 0x58A},
    {0x58D, 0x58F},
    {0x5BE, 0x5BE},
    {0x5C0, 0x5C0},
    {0x5C3, 0x5C3},
    {0x5C6, 0x5C6},
    {0x5F3, 0x5F4},
    {0x606, 0x60F},
    {0x61B, 0x61B},
    {0x61E, 0x61F},
    {0x66A, 0x66D},
    {0x6D4, 0x6D4},
    {0x6DE, 0x6DE},
    {0x6E9, 0x6E9},
    {0x6FD, 0x6FE},
    {0x700, 0x70D},
    {0x7F6, 0x7F9},
    {0x7FE, 0x7FF},
    {0x830, 0x83E},
    {0x85E, 0x85E},
    {0x964, 0x965},
    {0x970, 0x970},
    {0x9F2, 0x9F3},
    {0x9FA, 0x9FB},
    {0x9FD, 0x9FD},
    {0xA76, 0xA76},
    {0xAF0, 0xAF1},
    {0xB70, 0xB70},
    {0xBF3, 0xBFA},
    {0xC77, 0xC77},
    {0xC7F, 0xC7F},
    {0xC84, 0xC84},
    {0xD4F, 0xD4F},
    {0xD79, 0xD79},
    {0xDF4, 0xDF4},
    {0xE3F, 0xE3F},
    {0xE4F, 0xE4F},
    {0xE5A, 0xE5B},
    {0xF01, 0xF17},
    {0xF1A, 0xF1F},
    {0xF34, 0xF34},
    {0xF36, 0xF36},
    {0xF38, 0xF38},
    {0xF3A, 0xF3D},
    {0xF85, 0xF85},
    {0xFBE, 0xFC5},
    {0xFC7, 0xFCC},
    {0xFCE, 0xFDA},
    {0x104A, 0x104F},
    {0x109E, 0x109F},
    {0x10FB, 0x10FB},
    {0x1360, 0x1368},
    {0x1390, 0x1399},
    {0x1400, 0x1400},
    {0x166D, 0x166E},
    {0x169B, 0x169C},
    {0x16EB, 0x16ED},
    {0x1735, 0x1736},
    {0x17D4, 0x17D6},
    {0x17D8, 0x17DB},
    {0x1800, 0x180A},
    {0x1940, 0x1940},
    {0x1944, 0x1945},
    {0x19DE, 0x19FF},
    {0x1A1E, 0x1A1F},
    {0x1AA0, 0x1AA6},
    {0x1AA8, 0x1AAD},
    {0x1B5A, 0x1B6A},
    {0x1B74, 0x1B7C},
    {0x1BFC, 0x1BFF},
    {0x1C3B, 0x1C3F},
    {0x1C7E, 0x1C7F},
    {0x1CC0, 0x1CC7},
    {0x1CD3, 0x1CD3},
    {0x1FBD, 0x1FBD},
    {0x1FBF, 0x1FC1},
    {0x1FCD, 0x1FCF},
    {0x1FDD, 0x1FDF},
    {0x1FED, 0x1FEF},
    {0x1FFD, 0x1FFE},
    {0x2010, 0x2027},
    {0x2030, 0x205E},
    {0x207A, 0x207E},
    {0x208A, 0x208E},
    {0x20A0, 0x20BF},
    {0x2100, 0x2101},
    {0x2103, 0x2106},
    {0x2108, 0x2109},
    {0x2114, 0x2114},
    {0x2116, 0x2118},
    {0x211E, 0x2123},
    {0x2125, 0x2125},
    {0x2127, 0x2127},
    {0x2129, 0x2129},
    {0x212E, 0x212E},
    {0x213A, 0x213B},
    {0x2140, 0x2144},
    {0x214A, 0x214D},
    {0x214F, 0x214F},
    {0x218A, 0x218B},
    {0x2190, 0x2426},
    {0x2440, 0x244A},
    {0x249C, 0x24E9},
    {0x2500, 0x2775},
    {0x2794, 0x2B73},
    {0x2B76, 0x2B95},
    {0x2B97, 0x2BFF},
    {0x2CE5, 0x2CEA},
    {0x2CF9, 0x2CFC},
    {0x2CFE, 0x2CFF},
    {0x2D70, 0x2D70},
    {0x2E00, 0x2E2E},
    {0x2E30, 0x2E52},
    {0x2E80, 0x2E99},
    {0x2E9B, 0x2EF3},
    {0x2F00, 0x2FD5},
    {0x2FF0, 0x2FFB},
    {0x3001, 0x3004},
    {0x3008, 0x3020},
    {0x3030, 0x3030},
    {0x3036, 0x3037},
    {0x303D, 0x303F},
    {0x309B, 0x309C},
    {0x30A0, 0x30A0},
    {0x30FB, 0x30FB},
    {0x3190, 0x3191},
    {0x3196, 0x319F},
    {0x31C0, 0x31E3},
    {0x3200, 0x321E},
    {0x322A, 0x3247},
    {0x3250, 0x3250},
    {0x3260, 0x327F},
    {0x328A, 0x32B0},
    {0x32C0, 0x33FF},
    {0x4DC0, 0x4DFF},
    {0xA490, 0xA4C6},
    {0xA4FE, 0xA4FF},
    {0xA60D, 0xA60F},
    {0xA673, 0xA673},
    {0xA67E, 0xA67E},
    {0xA6F2, 0xA6F7},
    {0xA700, 0xA716},
    {0xA720, 0xA721},
    {0xA789, 0xA78A},
    {0xA828, 0xA82B},
    {0xA836, 0xA839},
    {0xA874, 0xA877},
    {0xA8CE, 0xA8CF},
    {0xA8F8, 0xA8FA},
    {0xA8FC, 0xA8FC},
    {0xA92E, 0xA92F},
    {0xA95F, 0xA95F},
    {0xA9C1, 0xA9CD},
    {0xA9DE, 0xA9DF},
    {0xAA5C, 0xAA5F},
    {0xAA77, 0xAA79},
    {0xAADE, 0xAADF},
    {0xAAF0, 0xAAF1},
    {0xAB5B, 0xAB5B},
    {0xAB6A, 0xAB6B},
    {0xABEB, 0xABEB},
    {0xFB29, 0xFB29},
    {0xFBB2, 0xFBC1},
    {0xFD3E, 0xFD3F},
    {0xFDFC, 0xFDFD},
    {0xFE10, 0xFE19},
    {0xFE30, 0xFE52},
    {0xFE54, 0xFE66},
    {0xFE68, 0xFE6B},
    {0xFF01, 0xFF0F},
    {0xFF1A, 0xFF20},
    {0xFF3B, 0xFF40},
    {0xFF5B, 0xFF65},
    {0xFFE0, 0xFFE6},
    {0xFFE8, 0xFFEE},
    {0xFFFC, 0xFFFD},
    {0x10100, 0x10102},
    {0x10137, 0x1013F},
    {0x10179, 0x10189},
    {0x1018C, 0x1018E},
    {0x10190, 0x1019C},
    {0x101A0, 0x101A0},
    {0x101D0, 0x101FC},
    {0x1039F, 0x1039F},
    {0x103D0, 0x103D0},
    {0x1056F, 0x1056F},
    {0x10857, 0x10857},
    {0x10877, 0x10878},
    {0x1091F, 0x1091F},
    {0x1093F, 0x1093F},
    {0x10A50, 0x10A58},
    {0x10A7F, 0x10A7F},
    {0x10AC8, 0x10AC8},
    {0x10AF0, 0x10AF6},
    {0x10B39, 0x10B3F},
    {0x10B99, 0x10B9C},
    {0x10EAD, 0x10EAD},
    {0x10F55, 0x10F59},
    {0x11047, 0x1104D},
    {0x110BB, 0x110BC},
    {0x110BE, 0x110C1},
    {0x11140, 0x11143},
    {0x11174, 0x11175},
    {0x111C5, 0x111C8},
    {0x111CD, 0x111CD},
    {0x111DB, 0x111DB},
    {0x111DD, 0x111DF},
    {0x11238, 0x1123D},
    {0x112A9, 0x112A9},
    {0x1144B, 0x1144F},
    {0x1145A, 0x1145B},
    {0x1145D, 0x1145D},
    {0x114C6, 0x114C6},
    {0x115C1, 0x115D7},
    {0x11641, 0x11643},
    {0x11660, 0x1166C},
    {0x1173C, 0x1173F},
    {0x1183B, 0x1183B},
    {0x11944, 0x11946},
    {0x119E2, 0x119E2},
    {0x11A3F, 0x11A46},
    {0x11A9A, 0x11A9C},
    {0x11A9E, 0x11AA2},
    {0x11C41, 0x11C45},
    {0x11C70, 0x11C71},
    {0x11EF7, 0x11EF8},
    {0x11FD5, 0x11FF1},
    {0x11FFF, 0x11FFF},
    {0x12470, 0x12474},
    {0x16A6E, 0x16A6F},
    {0x16AF5, 0x16AF5},
    {0x16B37, 0x16B3F},
    {0x16B44, 0x16B45},
    {0x16E97, 0x16E9A},
    {0x16FE2, 0x16FE2},
    {0x1BC9C, 0x1BC9C},
    {0x1BC9F, 0x1BC9F},
    {0x1D000, 0x1D0F5},
    {0x1D100, 0x1D126},
    {0x1D129, 0x1D164},
    {0x1D16A, 0x1D16C},
    {0x1D183, 0x1D184},
    {0x1D18C, 0x1D1A9},
    {0x1D1AE, 0x1D1E8},
    {0x1D200, 0x1D241},
    {0x1D245, 0x1D245},
    {0x1D300, 0x1D356},
    {0x1D6C1, 0x1D6C1},
    {0x1D6DB, 0x1D6DB},
    {0x1D6FB, 0x1D6FB},
    {0x1D715, 0x1D715},
    {0x1D735, 0x1D735},
    {0x1D74F, 0x1D74F},
    {0x1D76F, 0x1D76F},
    {0x1D789, 0x1D789},
    {0x1D7A9, 0x1D7A9},
    {0x1D7C3, 0x1D7C3},
    {0x1D800, 0x1D9FF},
    {0x1DA37, 0x1DA3A},
    {0x1DA6D, 0x1DA74},
    {0x1DA76, 0x1DA83},
    {0x1DA85, 0x1DA8B},
    {0x1E14F, 0x1E14F},
    {0x1E2FF, 0x1E2FF},
    {0x1E95E, 0x1E95F},
    {0x1ECAC, 0x1ECAC},
    {0x1ECB0, 0x1ECB0},
    {0x1ED2E, 0x1ED2E},
    {0x1EEF0, 0x1EEF1},
    {0x1F000, 0x1F02B},
    {0x1F030, 0x1F093},
    {0x1F0A0, 0x1F0AE},
    {0x1F0B1, 0x1F0BF},
    {0x1F0C1, 0x1F0CF},
    {0x1F0D1, 0x1F0F5},
    {0x1F10D, 0x1F1AD},
    {0x1F1E6, 0x1F202},
    {0x1F210, 0x1F23B},
    {0x1F240, 0x1F248},
    {0x1F250, 0x1F251},
    {0x1F260, 0x1F265},
    {0x1F300, 0x1F6D7},
    {0x1F6E0, 0x1F6EC},
    {0x1F6F0, 0x1F6FC},
    {0x1F700, 0x1F773},
    {0x1F780, 0x1F7D8},
    {0x1F7E0, 0x1F7EB},
    {0x1F800, 0x1F80B},
    {0x1F810, 0x1F847},
    {0x1F850, 0x1F859},
    {0x1F860, 0x1F887},
    {0x1F890, 0x1F8AD},
    {0x1F8B0, 0x1F8B1},
    {0x1F900, 0x1F978},
    {0x1F97A, 0x1F9CB},
    {0x1F9CD, 0x1FA53},
    {0x1FA60, 0x1FA6D},
    {0x1FA70, 0x1FA74},
    {0x1FA78, 0x1FA7A},
    {0x1FA80, 0x1FA86},
    {0x1FA90, 0x1FAA8},
    {0x1FAB0, 0x1FAB6},
    {0x1FAC0, 0x1FAC2},
    {0x1FAD0, 0x1FAD6},
    {0x1FB00, 0x1FB92},
    {0x1FB94, 0x1FBCA},
}};

inline constexpr std::array<CodepointRange, 10> kWhitespaceRanges{{
    {0x9, 0xD},
    {0x1C, 0x20},
    {0x85, 0x85},
    {0xA0, 0xA0},
    {0x1680, 0x1680},
    {0x2000, 0x200A},
    {0x2028, 0x2029},
    {0x202F, 0x202F},
    {0x205F, 0x205F},
    {0x3000, 0x3000},
}};

inline constexpr std::array<LowerMapping, 1393> kLowerMappings{{
    {0x41, "\x61"},
    {0x42, "\x62"},
    {0x43, "\x63"},
    {0x44, "\x64"},
    {0x45, "\x65"},
    {0x46, "\x66"},
    {0x47, "\x67"},
    {0x48, "\x68"},
    {0x49, "\x69"},
    {0x4A, "\x6a"},
    {0x4B, "\x6b"},
    {0x4C, "\x6c"},
    {0x4D, "\x6d"},
    {0x4E, "\x6e"},
    {0x4F, "\x6f"},
    {0x50, "\x70"},
    {0x51, "\x71"},
    {0x52, "\x72"},
    {0x53, "\x73"},
    {0x54, "\x74"},
    {0x55, "\x75"},
    {0x56, "\x76"},
    {0x57, "\x77"},
    {0x58, "\x78"},
    {0x59, "\x79"},
    {0x5A, "\x7a"},
    {0xC0, "\xc3\xa0"},
    {0xC1, "\xc3\xa1"},
    {0xC2, "\xc3\xa2"},
    {0xC3, "\xc3\xa3"},
    {0xC4, "\xc3\xa4"},
    {0xC5, "\xc3\xa5"},
    {0xC6, "\xc3\xa6"},
    {0xC7, "\xc3\xa7"},
    {0xC8, "\xc3\xa8"},
    {0xC9, "\xc3\xa9"},
    {0xCA, "\xc3\xaa"},
    {0xCB, "\xc3\xab"},
    {0xCC, "\xc3\xac"},
    {0xCD, "\xc3\xad"},
    {0xCE, "\xc3\xae"},
    {0xCF, "\xc3\xaf"},
    {0xD0, "\xc3\xb0"},
    {0xD1, "\xc3\xb1"},
    {0xD2, "\xc3\xb2"},
    {0xD3, "\xc3\xb3"},
    {0xD4, "\xc3\xb4"},
    {0xD5, "\xc3\xb5"},
    {0xD6, "\xc3\xb6"},
    {0xD8, "\xc3\xb8"},
    {0xD9, "\xc3\xb9"},
    {0xDA, "\xc3\xba"},
    {0xDB, "\xc3\xbb"},
    {0xDC, "\xc3\xbc"},
    {0xDD, "\xc3\xbd"},
    {0xDE, "\xc3\xbe"},
    {0x100, "\xc4\x81"},
    {0x102, "\xc4\x83"},
    {0x104, "\xc4\x85"},
    {0x106, "\xc4\x87"},
    {0x108, "\xc4\x89"},
    {0x10A, "\xc4\x8b"},
    {0x10C, "\xc4\x8d"},
    {0x10E, "\xc4\x8f"},
    {0x110, "\xc4\x91"},
    {0x112, "\xc4\x93"},
    {0x114, "\xc4\x95"},
    {0x116, "\xc4\x97"},
    {0x118, "\xc4\x99"},
    {0x11A, "\xc4\x9b"},
    {0x11C, "\xc4\x9d"},
    {0x11E, "\xc4\x9f"},
    {0x120, "\xc4\xa1"},
    {0x122, "\xc4\xa3"},
    {0x124, "\xc4\xa5"},
    {0x126, "\xc4\xa7"},
    {0x128, "\xc4\xa9"},
    {0x12A, "\xc4\xab"},
    {0x12C, "\xc4\xad"},
    {0x12E, "\xc4\xaf"},
    {0x130, "\x69\xcc\x87"},
    {0x132, "\xc4\xb3"},
    {0x134, "\xc4\xb5"},
    {0x136, "\xc4\xb7"},
    {0x139, "\xc4\xba"},
    {0x13B, "\xc4\xbc"},
    {0x13D, "\xc4\xbe"},
    {0x13F, "\xc5\x80"},
    {0x141, "\xc5\x82"},
    {0x143, "\xc5\x84"},
    {0x145, "\xc5\x86"},
    {0x147, "\xc5\x88"},
    {0x14A, "\xc5\x8b"},
    {0x14C, "\xc5\x8d"},
    {0x14E, "\xc5\x8f"},
    {0x150, "\xc5\x91"},
    {0x152, "\xc5\x93"},
    {0x154, "\xc5\x95"},
    {0x156, "\xc5\x97"},
    {0x158, "\xc5\x99"},
    {0x15A, "\xc5\x9b"},
    {0x15C, "\xc5\x9d"},
    {0x15E, "\xc5\x9f"},
    {0x160, "\xc5\xa1"},
    {0x162, "\xc5\xa3"},
    {0x164, "\xc5\xa5"},
    {0x166, "\xc5\xa7"},
    {0x168, "\xc5\xa9"},
    {0x16A, "\xc5\xab"},
    {0x16C, "\xc5\xad"},
    {0x16E, "\xc5\xaf"},
    {0x170, "\xc5\xb1"},
    {0x172, "\xc5\xb3"},
    {0x174, "\xc5\xb5"},
    {0x176, "\xc5\xb7"},
    {0x178, "\xc3\xbf"},
    {0x179, "\xc5\xba"},
    {0x17B, "\xc5\xbc"},
    {0x17D, "\xc5\xbe"},
    {0x181, "\xc9\x93"},
    {0x182, "\xc6\x83"},
    {0x184, "\xc6\x85"},
    {0x186, "\xc9\x94"},
    {0x187, "\xc6\x88"},
    {0x189, "\xc9\x96"},
    {0x18A, "\xc9\x97"},
    {0x18B, "\xc6\x8c"},
    {0x18E, "\xc7\x9d"},
    {0x18F, "\xc9\x99"},
    {0x190, "\xc9\x9b"},
    {0x191, "\xc6\x92"},
    {0x193, "\xc9\xa0"},
    {0x194, "\xc9\xa3"},
    {0x196, "\xc9\xa9"},
    {0x197, "\xc9\xa8"},
    {0x198, "\xc6\x99"},
    {0x19C, "\xc9\xaf"},
    {0x19D, "\xc9\xb2"},
    {0x19F, "\xc9\xb5"},
    {0x1A0, "\xc6\xa1"},
    {0x1A2, "\xc6\xa3"},
    {0x1A4, "\xc6\xa5"},
    {0x1A6, "\xca\x80"},
    {0x1A7, "\xc6\xa8"},
    {0x1A9, "\xca\x83"},
    {0x1AC, "\xc6\xad"},
    {0x1AE, "\xca\x88"},
    {0x1AF, "\xc6\xb0"},
    {0x1B1, "\xca\x8a"},
    {0x1B2, "\xca\x8b"},
    {0x1B3, "\xc6\xb4"},
    {0x1B5, "\xc6\xb6"},
    {0x1B7, "\xca\x92"},
    {0x1B8, "\xc6\xb9"},
    {0x1BC, "\xc6\xbd"},
    {0x1C4, "\xc7\x86"},
    {0x1C5, "\xc7\x86"},
    {0x1C7, "\xc7\x89"},
    {0x1C8, "\xc7\x89"},
    {0x1CA, "\xc7\x8c"},
    {0x1CB, "\xc7\x8c"},
    {0x1CD, "\xc7\x8e"},
    {0x1CF, "\xc7\x90"},
    {0x1D1, "\xc7\x92"},
    {0x1D3, "\xc7\x94"},
    {0x1D5, "\xc7\x96"},
    {0x1D7, "\xc7\x98"},
    {0x1D9, "\xc7\x9a"},
    {0x1DB, "\xc7\x9c"},
    {0x1DE, "\xc7\x9f"},
    {0x1E0, "\xc7\xa1"},
    {0x1E2, "\xc7\xa3"},
    {0x1E4, "\xc7\xa5"},
    {0x1E6, "\xc7\xa7"},
    {0x1E8, "\xc7\xa9"},
    {0x1EA, "\xc7\xab"},
    {0x1EC, "\xc7\xad"},
    {0x1EE, "\xc7\xaf"},
    {0x1F1, "\xc7\xb3"},
    {0x1F2, "\xc7\xb3"},
    {0x1F4, "\xc7\xb5"},
    {0x1F6, "\xc6\x95"},
    {0x1F7, "\xc6\xbf"},
    {0x1F8, "\xc7\xb9"},
    {0x1FA, "\xc7\xbb"},
    {0x1FC, "\xc7\xbd"},
    {0x1FE, "\xc7\xbf"},
    {0x200, "\xc8\x81"},
    {0x202, "\xc8\x83"},
    {0x204, "\xc8\x85"},
    {0x206, "\xc8\x87"},
    {0x208, "\xc8\x89"},
    {0x20A, "\xc8\x8b"},
    {0x20C, "\xc8\x8d"},
    {0x20E, "\xc8\x8f"},
    {0x210, "\xc8\x91"},
    {0x212, "\xc8\x93"},
    {0x214, "\xc8\x95"},
    {0x216, "\xc8\x97"},
    {0x218, "\xc8\x99"},
    {0x21A, "\xc8\x9b"},
    {0x21C, "\xc8\x9d"},
    {0x21E, "\xc8\x9f"},
    {0x220, "\xc6\x9e"},
    {0x222, "\xc8\xa3"},
    {0x224, "\xc8\xa5"},
    {0x226, "\xc8\xa7"},
    {0x228, "\xc8\xa9"},
    {0x22A, "\xc8\xab"},
    {0x22C, "\xc8\xad"},
    {0x22E, "\xc8\xaf"},
    {0x230, "\xc8\xb1"},
    {0x232, "\xc8\xb3"},
    {0x23A, "\xe2\xb1\xa5"},
    {0x23B, "\xc8\xbc"},
    {0x23D, "\xc6\x9a"},
    {0x23E, "\xe2\xb1\xa6"},
    {0x241, "\xc9\x82"},
    {0x243, "\xc6\x80"},
    {0x244, "\xca\x89"},
    {0x245, "\xca\x8c"},
    {0x246, "\xc9\x87"},
    {0x248, "\xc9\x89"},
    {0x24A, "\xc9\x8b"},
    {0x24C, "\xc9\x8d"},
    {0x24E, "\xc9\x8f"},
    {0x370, "\xcd\xb1"},
    {0x372, "\xcd\xb3"},
    {0x376, "\xcd\xb7"},
    {0x37F, "\xcf\xb3"},
    {0x386, "\xce\xac"},
    {0x388, "\xce\xad"},
    {0x389, "\xce\xae"},
    {0x38A, "\xce\xaf"},
    {0x38C, "\xcf\x8c"},
    {0x38E, "\xcf\x8d"},
    {0x38F, "\xcf\x8e"},
    {0x391, "\xce\xb1"},
    {0x392, "\xce\xb2"},
    {0x393, "\xce\xb3"},
    {0x394, "\xce\xb4"},
    {0x395, "\xce\xb5"},
    {0x396, "\xce\xb6"},
    {0x397, "\xce\xb7"},
    {0x398, "\xce\xb8"},
    {0x399, "\xce\xb9"},
    {0x39A, "\xce\xba"},
    {0x39B, "\xce\xbb"},
    {0x39C, "\xce\xbc"},
    {0x39D, "\xce\xbd"},
    {0x39E, "\xce\xbe"},
    {0x39F, "\xce\xbf"},
    {0x3A0, "\xcf\x80"},
    {0x3A1, "\xcf\x81"},
    {0x3A3, "\xcf\x83"},
    {0x3A4, "\xcf\x84"},
    {0x3A5, "\xcf\x85"},
    {0x3A6, "\xcf\x86"},
    {0x3A7, "\xcf\x87"},
    {0x3A8, "\xcf\x88"},
    {0x3A9, "\xcf\x89"},
    {0x3AA, "\xcf\x8a"},
    {0x3AB, "\xcf\x8b"},
    {0x3CF, "\xcf\x97"},
    {0x3D8, "\xcf\x99"},
    {0x3DA, "\xcf\x9b"},
    {0x3DC, "\xcf\x9d"},
    {0x3DE, "\xcf\x9f"},
    {0x3E0, "\xcf\xa1"},
    {0x3E2, "\xcf\xa3"},
    {0x3E4, "\xcf\xa5"},
    {0x3E6, "\xcf\xa7"},
    {0x3E8, "\xcf\xa9"},
    {0x3EA, "\xcf\xab"},
    {0x3EC, "\xcf\xad"},
    {0x3EE, "\xcf\xaf"},
    {0x3F4, "\xce\xb8"},
    {0x3F7, "\xcf\xb8"},
    {0x3F9, "\xcf\xb2"},
    {0x3FA, "\xcf\xbb"},
    {0x3FD, "\xcd\xbb"},
    {0x3FE, "\xcd\xbc"},
    {0x3FF, "\xcd\xbd"},
    {0x400, "\xd1\x90"},
    {0x401, "\xd1\x91"},
    {0x402, "\xd1\x92"},
    {0x403, "\xd1\x93"},
    {0x404, "\xd1\x94"},
    {0x405, "\xd1\x95"},
    {0x406, "\xd1\x96"},
    {0x407, "\xd1\x97"},
    {0x408, "\xd1\x98"},
    {0x409, "\xd1\x99"},
    {0x40A, "\xd1\x9a"},
    {0x40B, "\xd1\x9b"},
    {0x40C, "\xd1\x9c"},
    {0x40D, "\xd1\x9d"},
    {0x40E, "\xd1\x9e"},
    {0x40F, "\xd1\x9f"},
    {0x410, "\xd0\xb0"},
    {0x411, "\xd0\xb1"},
    {0x412, "\xd0\xb2"},
    {0x413, "\xd0\xb3"},
    {0x414, "\xd0\xb4"},
    {0x415, "\xd0\xb5"},
    {0x416, "\xd0\xb6"},
    {0x417, "\xd0\xb7"},
    {0x418, "\xd0\xb8"},
    {0x419, "\xd0\xb9"},
    {0x41A, "\xd0\xba"},
    {0x41B, "\xd0\xbb"},
    {0x41C, "\xd0\xbc"},
    {0x41D, "\xd0\xbd"},
    {0x41E, "\xd0\xbe"},
    {0x41F, "\xd0\xbf"},
    {0x420, "\xd1\x80"},
    {0x421, "\xd1\x81"},
    {0x422, "\xd1\x82"},
    {0x423, "\xd1\x83"},
    {0x424, "\xd1\x84"},
    {0x425, "\xd1\x85"},
    {0x426, "\xd1\x86"},
    {0x427, "\xd1\x87"},
    {0x428, "\xd1\x88"},
    {0x429, "\xd1\x89"},
    {0x42A, "\xd1\x8a"},
    {0x42B, "\xd1\x8b"},
    {0x42C, "\xd1\x8c"},
    {0x42D, "\xd1\x8d"},
    {0x42E, "\xd1\x8e"},
    {0x42F, "\xd1\x8f"},
    {0x460, "\xd1\xa1"},
    {0x462, "\xd1\xa3"},
    {0x464, "\xd1\xa5"},
    {0x466, "\xd1\xa7"},
    {0x468, "\xd1\xa9"},
    {0x46A, "\xd1\xab"},
    {0x46C, "\xd1\xad"},
    {0x46E, "\xd1\xaf"},
    {0x470, "\xd1\xb1"},
    {0x472, "\xd1\xb3"},
    {0x474, "\xd1\xb5"},
    {0x476, "\xd1\xb7"},
    {0x478, "\xd1\xb9"},
    {0x47A, "\xd1\xbb"},
    {0x47C, "\xd1\xbd"},
    {0x47E, "\xd1\xbf"},
    {0x480, "\xd2\x81"},
    {0x48A, "\xd2\x8b"},
    {0x48C, "\xd2\x8d"},
    {0x48E, "\xd2\x8f"},
    {0x490, "\xd2\x91"},
    {0x492, "\xd2\x93"},
    {0x494, "\xd2\x95"},
    {0x496, "\xd2\x97"},
    {0x498, "\xd2\x99"},
    {0x49A, "\xd2\x9b"},
    {0x49C, "\xd2\x9d"},
    {0x49E, "\xd2\x9f"},
    {0x4A0, "\xd2\xa1"},
    {0x4A2, "\xd2\xa3"},
    {0x4A4, "\xd2\xa5"},
    {0x4A6, "\xd2\xa7"},
    {0x4A8, "\xd2\xa9"},
    {0x4AA, "\xd2\xab"},
    {0x4AC, "\xd2\xad"},
    {0x4AE, "\xd2\xaf"},
    {0x4B0, "\xd2\xb1"},
    {0x4B2, "\xd2\xb3"},
    {0x4B4, "\xd2\xb5"},
    {0x4B6, "\xd2\xb7"},
    {0x4B8, "\xd2\xb9"},
    {0x4BA, "\xd2\xbb"},
    {0x4BC, "\xd2\xbd"},
    {0x4BE, "\xd2\xbf"},
    {0x4C0, "\xd3\x8f"},
    {0x4C1, "\xd3\x82"},
    {0x4C3, "\xd3\x84"},
    {0x4C5, "\xd3\x86"},
    {0x4C7, "\xd3\x88"},
    {0x4C9, "\xd3\x8a"},
    {0x4CB, "\xd3\x8c"},
    {0x4CD, "\xd3\x8e"},
    {0x4D0, "\xd3\x91"},
    {0x4D2, "\xd3\x93"},
    {0x4D4, "\xd3\x95"},
    {0x4D6, "\xd3\x97"},
    {0x4D8, "\xd3\x99"},
    {0x4DA, "\xd3\x9b"},
    {0x4DC, "\xd3\x9d"},
    {0x4DE, "\xd3\x9f"},
    {0x4E0, "\xd3\xa1"},
    {0x4E2, "\xd3\xa3"},
    {0x4E4, "\xd3\xa5"},
    {0x4E6, "\xd3\xa7"},
    {0x4E8, "\xd3\xa9"},
    {0x4EA, "\xd3\xab"},
    {0x4EC, "\xd3\xad"},
    {0x4EE, "\xd3\xaf"},
    {0x4F0, "\xd3\xb1"},
    {0x4F2, "\xd3\xb3"},
    {0x4F4, "\xd3\xb5"},
    {0x4F6, "\xd3\xb7"},
    {0x4F8, "\xd3\xb9"},
    {0x4FA, "\xd3\xbb"},
    {0x4FC, "\xd3\xbd"},
    {0x4FE, "\xd3\xbf"},
    {0x500, "\xd4\x81"},
    {0x502, "\xd4\x83"},
    {0x504, "\xd4\x85"},
    {0x506, "\xd4\x87"},
    {0x508, "\xd4\x89"},
    {0x50A, "\xd4\x8b"},
    {0x50C, "\xd4\x8d"},
    {0x50E, "\xd4\x8f"},
    {0x510, "\xd4\x91"},
    {0x512, "\xd4\x93"},
    {0x514, "\xd4\x95"},
    {0x516, "\xd4\x97"},
    {0x518, "\xd4\x99"},
    {0x51A, "\xd4\x9b"},
    {0x51C, "\xd4\x9d"},
    {0x51E, "\xd4\x9f"},
    {0x520, "\xd4\xa1"},
    {0x522, "\xd4\xa3"},
    {0x524, "\xd4\xa5"},
    {0x526, "\xd4\xa7"},
    {0x528, "\xd4\xa9"},
    {0x52A, "\xd4\xab"},
    {0x52C, "\xd4\xad"},
    {0x52E, "\xd4\xaf"},
    {0x531, "\xd5\xa1"},
    {0x532, "\xd5\xa2"},
    {0x533, "\xd5\xa3"},
    {0x534, "\xd5\xa4"},
    {0x535, "\xd5\xa5"},
    {0x536, "\xd5\xa6"},
    {0x537, "\xd5\xa7"},
    {0x538, "\xd5\xa8"},
    {0x539, "\xd5\xa9"},
    {0x53A, "\xd5\xaa"},
    {0x53B, "\xd5\xab"},
    {0x53C, "\xd5\xac"},
    {0x53D, "\xd5\xad"},
    {0x53E, "\xd5\xae"},
    {0x53F, "\xd5\xaf"},
    {0x540, "\xd5\xb0"},
    {0x541, "\xd5\xb1"},
    {0x542, "\xd5\xb2"},
    {0x543, "\xd5\xb3"},
    {0x544, "\xd5\xb4"},
    {0x545, "\xd5\xb5"},
    {0x546, "\xd5\xb6"},
    {0x547, "\xd5\xb7"},
    {0x548, "\xd5\xb8"},
    {0x549, "\xd5\xb9"},
    {0x54A, "\xd5\xba"},
    {0x54B, "\xd5\xbb"},
    {0x54C, "\xd5\xbc"},
    {0x54D, "\xd5\xbd"},
    {0x54E, "\xd5\xbe"},
    {0x54F, "\xd5\xbf"},
    {0x550, "\xd6\x80"},
    {0x551, "\xd6\x81"},
    {0x552, "\xd6\x82"},
    {0x553, "\xd6\x83"},
    {0x554, "\xd6\x84"},
    {0x555, "\xd6\x85"},
    {0x556, "\xd6\x86"},
    {0x10A0, "\xe2\xb4\x80"},
    {0x10A1, "\xe2\xb4\x81"},
    {0x10A2, "\xe2\xb4\x82"},
    {0x10A3, "\xe2\xb4\x83"},
    {0x10A4, "\xe2\xb4\x84"},
    {0x10A5, "\xe2\xb4\x85"},
    {0x10A6, "\xe2\xb4\x86"},
    {0x10A7, "\xe2\xb4\x87"},
    {0x10A8, "\xe2\xb4\x88"},
    {0x10A9, "\xe2\xb4\x89"},
    {0x10AA, "\xe2\xb4\x8a"},
    {0x10AB, "\xe2\xb4\x8b"},
    {0x10AC, "\xe2\xb4\x8c"},
    {0x10AD, "\xe2\xb4\x8d"},
    {0x10AE, "\xe2\xb4\x8e"},
    {0x10AF, "\xe2\xb4\x8f"},
    {0x10B0, "\xe2\xb4\x90"},
    {0x10B1, "\xe2\xb4\x91"},
    {0x10B2, "\xe2\xb4\x92"},
    {0x10B3, "\xe2\xb4\x93"},
    {0x10B4, "\xe2\xb4\x94"},
    {0x10B5, "\xe2\xb4\x95"},
    {0x10B6, "\xe2\xb4\x96"},
    {0x10B7, "\xe2\xb4\x97"},
    {0x10B8, "\xe2\xb4\x98"},
    {0x10B9, "\xe2\xb4\x99"},
    {0x10BA, "\xe2\xb4\x9a"},
    {0x10BB, "\xe2\xb4\x9b"},
    {0x10BC, "\xe2\xb4\x9c"},
    {0x10BD, "\xe2\xb4\x9d"},
    {0x10BE, "\xe2\xb4\x9e"},
    {0x10BF, "\xe2\xb4\x9f"},
    {0x10C0, "\xe2\xb4\xa0"},
    {0x10C1, "\xe2\xb4\xa1"},
    {0x10C2, "\xe2\xb4\xa2"},
    {0x10C3, "\xe2\xb4\xa3"},
    {0x10C4, "\xe2\xb4\xa4"},
    {0x10C5, "\xe2\xb4\xa5"},
    {0x10C7, "\xe2\xb4\xa7"},
    {0x10CD, "\xe2\xb4\xad"},
    {0x13A0, "\xea\xad\xb0"},
    {0x13A1, "\xea\xad\xb1"},
    {0x13A2, "\xea\xad\xb2"},
    {0x13A3, "\xea\xad\xb3"},
    {0x13A4, "\xea\xad\xb4"},
    {0x13A5, "\xea\xad\xb5"},
    {0x13A6, "\xea\xad\xb6"},
    {0x13A7, "\xea\xad\xb7"},
    {0x13A8, "\xea\xad\xb8"},
    {0x13A9, "\xea\xad\xb9"},
    {0x13AA, "\xea\xad\xba"},
    {0x13AB, "\xea\xad\xbb"},
    {0x13AC, "\xea\xad\xbc"},
    {0x13AD, "\xea\xad\xbd"},
    {0x13AE, "\xea\xad\xbe"},
    {0x13AF, "\xea\xad\xbf"},
    {0x13B0, "\xea\xae\x80"},
    {0x13B1, "\xea\xae\x81"},
    {0x13B2, "\xea\xae\x82"},
    {0x13B3, "\xea\xae\x83"},
    {0x13B4, "\xea\xae\x84"},
    {0x13B5, "\xea\xae\x85"},
    {0x13B6, "\xea\xae\x86"},
    {0x13B7, "\xea\xae\x87"},
    {0x13B8, "\xea\xae\x88"},
    {0x13B9, "\xea\xae\x89"},
    {0x13BA, "\xea\xae\x8a"},
    {0x13BB, "\xea\xae\x8b"},
    {0x13BC, "\xea\xae\x8c"},
    {0x13BD, "\xea\xae\x8d"},
    {0x13BE, "\xea\xae\x8e"},
    {0x13BF, "\xea\xae\x8f"},
    {0x13C0, "\xea\xae\x90"},
    {0x13C1, "\xea\xae\x91"},
    {0x13C2, "\xea\xae\x92"},
    {0x13C3, "\xea\xae\x93"},
    {0x13C4, "\xea\xae\x94"},
    {0x13C5, "\xea\xae\x95"},
    {0x13C6, "\xea\xae\x96"},
    {0x13C7, "\xea\xae\x97"},
    {0x13C8, "\xea\xae\x98"},
    {0x13C9, "\xea\xae\x99"},
    {0x13CA, "\xea\xae\x9a"},
    {0x13CB, "\xea\xae\x9b"},
    {0x13CC, "\xea\xae\x9c"},
    {0x13CD, "\xea\xae\x9d"},
    {0x13CE, "\xea\xae\x9e"},
    {0x13CF, "\xea\xae\x9f"},
    {0x13D0, "\xea\xae\xa0"},
    {0x13D1, "\xea\xae\xa1"},
    {0x13D2, "\xea\xae\xa2"},
    {0x13D3, "\xea\xae\xa3"},
    {0x13D4, "\xea\xae\xa4"},
    {0x13D5, "\xea\xae\xa5"},
    {0x13D6, "\xea\xae\xa6"},
    {0x13D7, "\xea\xae\xa7"},
    {0x13D8, "\xea\xae\xa8"},
    {0x13D9, "\xea\xae\xa9"},
    {0x13DA, "\xea\xae\xaa"},
    {0x13DB, "\xea\xae\xab"},
    {0x13DC, "\xea\xae\xac"},
    {0x13DD, "\xea\xae\xad"},
    {0x13DE, "\xea\xae\xae"},
    {0x13DF, "\xea\xae\xaf"},
    {0x13E0, "\xea\xae\xb0"},
    {0x13E1, "\xea\xae\xb1"},
    {0x13E2, "\xea\xae\xb2"},
    {0x13E3, "\xea\xae\xb3"},
    {0x13E4, "\xea\xae\xb4"},
    {0x13E5, "\xea\xae\xb5"},
    {0x13E6, "\xea\xae\xb6"},
    {0x13E7, "\xea\xae\xb7"},
    {0x13E8, "\xea\xae\xb8"},
    {0x13E9, "\xea\xae\xb9"},
    {0x13EA, "\xea\xae\xba"},
    {0x13EB, "\xea\xae\xbb"},
    {0x13EC, "\xea\xae\xbc"},
    {0x13ED, "\xea\xae\xbd"},
    {0x13EE, "\xea\xae\xbe"},
    {0x13EF, "\xea\xae\xbf"},
    {0x13F0, "\xe1\x8f\xb8"},
    {0x13F1, "\xe1\x8f\xb9"},
    {0x13F2, "\xe1\x8f\xba"},
    {0x13F3, "\xe1\x8f\xbb"},
    {0x13F4, "\xe1\x8f\xbc"},
    {0x13F5, "\xe1\x8f\xbd"},
    {0x1C90, "\xe1\x83\x90"},
    {0x1C91, "\xe1\x83\x91"},
    {0x1C92, "\xe1\x83\x92"},
    {0x1C93, "\xe1\x83\x93"},
    {0x1C94, "\xe1\x83\x94"},
    {0x1C95, "\xe1\x83\x95"},
    {0x1C96, "\xe1\x83\x96"},
    {0x1C97, "\xe1\x83\x97"},
    {0x1C98, "\xe1\x83\x98"},
    {0x1C99, "\xe1\x83\x99"},
    {0x1C9A, "\xe1\x83\x9a"},
    {0x1C9B, "\xe1\x83\x9b"},
    {0x1C9C, "\xe1\x83\x9c"},
    {0x1C9D, "\xe1\x83\x9d"},
    {0x1C9E, "\xe1\x83\x9e"},
    {0x1C9F, "\xe1\x83\x9f"},
    {0x1CA0, "\xe1\x83\xa0"},
    {0x1CA1, "\xe1\x83\xa1"},
    {0x1CA2, "\xe1\x83\xa2"},
    {0x1CA3, "\xe1\x83\xa3"},
    {0x1CA4, "\xe1\x83\xa4"},
    {0x1CA5, "\xe1\x83\xa5"},
    {0x1CA6, "\xe1\x83\xa6"},
    {0x1CA7, "\xe1\x83\xa7"},
    {0x1CA8, "\xe1\x83\xa8"},
    {0x1CA9, "\xe1\x83\xa9"},
    {0x1CAA, "\xe1\x83\xaa"},
    {0x1CAB, "\xe1\x83\xab"},
    {0x1CAC, "\xe1\x83\xac"},
    {0x1CAD, "\xe1\x83\xad"},
    {0x1CAE, "\xe1\x83\xae"},
    {0x1CAF, "\xe1\x83\xaf"},
    {0x1CB0, "\xe1\x83\xb0"},
    {0x1CB1, "\xe1\x83\xb1"},
    {0x1CB2, "\xe1\x83\xb2"},
    {0x1CB3, "\xe1\x83\xb3"},
    {0x1CB4, "\xe1\x83\xb4"},
    {0x1CB5, "\xe1\x83\xb5"},
    {0x1CB6, "\xe1\x83\xb6"},
    {0x1CB7, "\xe1\x83\xb7"},
    {0x1CB8, "\xe1\x83\xb8"},
    {0x1CB9, "\xe1\x83\xb9"},
    {0x1CBA, "\xe1\x83\xba"},
    {0x1CBD, "\xe1\x83\xbd"},
    {0x1CBE, "\xe1\x83\xbe"},
    {0x1CBF, "\xe1\x83\xbf"},
    {0x1E00, "\xe1\xb8\x81"},
    {0x1E02, "\xe1\xb8\x83"},
    {0x1E04, "\xe1\xb8\x85"},
    {0x1E06, "\xe1\xb8\x87"},
    {0x1E08, "\xe1\xb8\x89"},
    {0x1E0A, "\xe1\xb8\x8b"},
    {0x1E0C, "\xe1\xb8\x8d"},
    {0x1E0E, "\xe1\xb8\x8f"},
    {0x1E10, "\xe1\xb8\x91"},
    {0x1E12, "\xe1\xb8\x93"},
    {0x1E14, "\xe1\xb8\x95"},
    {0x1E16, "\xe1\xb8\x97"},
    {0x1E18, "\xe1\xb8\x99"},
    {0x1E1A, "\xe1\xb8\x9b"},
    {0x1E1C, "\xe1\xb8\x9d"},
    {0x1E1E, "\xe1\xb8\x9f"},
    {0x1E20, "\xe1\xb8\xa1"},
    {0x1E22, "\xe1\xb8\xa3"},
    {0x1E24, "\xe1\xb8\xa5"},
    {0x1E26, "\xe1\xb8\xa7"},
    {0x1E28, "\xe1\xb8\xa9"},
    {0x1E2A, "\xe1\xb8\xab"},
    {0x1E2C, "\xe1\xb8\xad"},
    {0x1E2E, "\xe1\xb8\xaf"},
    {0x1E30, "\xe1\xb8\xb1"},
    {0x1E32, "\xe1\xb8\xb3"},
    {0x1E34, "\xe1\xb8\xb5"},
    {0x1E36, "\xe1\xb8\xb7"},
    {0x1E38, "\xe1\xb8\xb9"},
    {0x1E3A, "\xe1\xb8\xbb"},
    {0x1E3C, "\xe1\xb8\xbd"},
    {0x1E3E, "\xe1\xb8\xbf"},
    {0x1E40, "\xe1\xb9\x81"},
    {0x1E42, "\xe1\xb9\x83"},
    {0x1E44, "\xe1\xb9\x85"},
    {0x1E46, "\xe1\xb9\x87"},
    {0x1E48, "\xe1\xb9\x89"},
    {0x1E4A, "\xe1\xb9\x8b"},
    {0x1E4C, "\xe1\xb9\x8d"},
    {0x1E4E, "\xe1\xb9\x8f"},
    {0x1E50, "\xe1\xb9\x91"},
    {0x1E52, "\xe1\xb9\x93"},
    {0x1E54, "\xe1\xb9\x95"},
    {0x1E56, "\xe1\xb9\x97"},
    {0x1E58, "\xe1\xb9\x99"},
    {0x1E5A, "\xe1\xb9\x9b"},
    {0x1E5C, "\xe1\xb9\x9d"},
    {0x1E5E, "\xe1\xb9\x9f"},
    {0x1E60, "\xe1\xb9\xa1"},
    {0x1E62, "\xe1\xb9\xa3"},
    {0x1E64, "\xe1\xb9\xa5"},
    {0x1E66, "\xe1\xb9\xa7"},
    {0x1E68, "\xe1\xb9\xa9"},
    {0x1E6A, "\xe1\xb9\xab"},
    {0x1E6C, "\xe1\xb9\xad"},
    {0x1E6E, "\xe1\xb9\xaf"},
    {0x1E70, "\xe1\xb9\xb1"},
    {0x1E72, "\xe1\xb9\xb3"},
    {0x1E74, "\xe1\xb9\xb5"},
    {0x1E76, "\xe1\xb9\xb7"},
    {0x1E78, "\xe1\xb9\xb9"},
    {0x1E7A, "\xe1\xb9\xbb"},
    {0x1E7C, "\xe1\xb9\xbd"},
    {0x1E7E, "\xe1\xb9\xbf"},
    {0x1E80, "\xe1\xba\x81"},
    {0x1E82, "\xe1\xba\x83"},
    {0x1E84, "\xe1\xba\x85"},
    {0x1E86, "\xe1\xba\x87"},
    {0x1E88, "\xe1\xba\x89"},
    {0x1E8A, "\xe1\xba\x8b"},
    {0x1E8C, "\xe1\xba\x8d"},
    {0x1E8E, "\xe1\xba\x8f"},
    {0x1E90, "\xe1\xba\x91"},
    {0x1E92, "\xe1\xba\x93"},
    {0x1E94, "\xe1\xba\x95"},
    {0x1E9E, "\xc3\x9f"},
    {0x1EA0, "\xe1\xba\xa1"},
    {0x1EA2, "\xe1\xba\xa3"},
    {0x1EA4, "\xe1\xba\xa5"},
    {0x1EA6, "\xe1\xba\xa7"},
    {0x1EA8, "\xe1\xba\xa9"},
    {0x1EAA, "\xe1\xba\xab"},
    {0x1EAC, "\xe1\xba\xad"},
    {0x1EAE, "\xe1\xba\xaf"},
    {0x1EB0, "\xe1\xba\xb1"},
    {0x1EB2, "\xe1\xba\xb3"},
    {0x1EB4, "\xe1\xba\xb5"},
    {0x1EB6, "\xe1\xba\xb7"},
    {0x1EB8, "\xe1\xba\xb9"},
    {0x1EBA, "\xe1\xba\xbb"},
    {0x1EBC, "\xe1\xba\xbd"},
    {0x1EBE, "\xe1\xba\xbf"},
    {0x1EC0, "\xe1\xbb\x81"},
    {0x1EC2, "\xe1\xbb\x83"},
    {0x1EC4, "\xe1\xbb\x85"},
    {0x1EC6, "\xe1\xbb\x87"},
    {0x1EC8, "\xe1\xbb\x89"},
    {0x1ECA, "\xe1\xbb\x8b"},
    {0x1ECC, "\xe1\xbb\x8d"},
    {0x1ECE, "\xe1\xbb\x8f"},
    {0x1ED0, "\xe1\xbb\x91"},
    {0x1ED2, "\xe1\xbb\x93"},
    {0x1ED4, "\xe1\xbb\x95"},
    {0x1ED6, "\xe1\xbb\x97"},
    {0x1ED8, "\xe1\xbb\x99"},
    {0x1EDA, "\xe1\xbb\x9b"},
    {0x1EDC, "\xe1\xbb\x9d"},
    {0x1EDE, "\xe1\xbb\x9f"},
    {0x1EE0, "\xe1\xbb\xa1"},
    {0x1EE2, "\xe1\xbb\xa3"},
    {0x1EE4, "\xe1\xbb\xa5"},
    {0x1EE6, "\xe1\xbb\xa7"},
    {0x1EE8, "\xe1\xbb\xa9"},
    {0x1EEA, "\xe1\xbb\xab"},
    {0x1EEC, "\xe1\xbb\xad"},
    {0x1EEE, "\xe1\xbb\xaf"},
    {0x1EF0, "\xe1\xbb\xb1"},
    {0x1EF2, "\xe1\xbb\xb3"},
    {0x1EF4, "\xe1\xbb\xb5"},
    {0x1EF6, "\xe1\xbb\xb7"},
    {0x1EF8, "\xe1\xbb\xb9"},
    {0x1EFA, "\xe1\xbb\xbb"},
    {0x1EFC, "\xe1\xbb\xbd"},
    {0x1EFE, "\xe1\xbb\xbf"},
    {0x1F08, "\xe1\xbc\x80"},
    {0x1F09, "\xe1\xbc\x81"},
    {0x1F0A, "\xe1\xbc\x82"},
    {0x1F0B, "\xe1\xbc\x83"},
    {0x1F0C, "\xe1\xbc\x84"},
    {0x1F0D, "\xe1\xbc\x85"},
    {0x1F0E, "\xe1\xbc\x86"},
    {0x1F0F, "\xe1\xbc\x87"},
    {0x1F18, "\xe1\xbc\x90"},
    {0x1F19, "\xe1\xbc\x91"},
    {0x1F1A, "\xe1\xbc\x92"},
    {0x1F1B, "\xe1\xbc\x93"},
    {0x1F1C, "\xe1\xbc\x94"},
    {0x1F1D, "\xe1\xbc\x95"},
    {0x1F28, "\xe1\xbc\xa0"},
    {0x1F29, "\xe1\xbc\xa1"},
    {0x1F2A, "\xe1\xbc\xa2"},
    {0x1F2B, "\xe1\xbc\xa3"},
    {0x1F2C, "\xe1\xbc\xa4"},
    {0x1F2D, "\xe1\xbc\xa5"},
    {0x1F2E, "\xe1\xbc\xa6"},
    {0x1F2F, "\xe1\xbc\xa7"},
    {0x1F38, "\xe1\xbc\xb0"},
    {0x1F39, "\xe1\xbc\xb1"},
    {0x1F3A, "\xe1\xbc\xb2"},
    {0x1F3B, "\xe1\xbc\xb3"},
    {0x1F3C, "\xe1\xbc\xb4"},
    {0x1F3D, "\xe1\xbc\xb5"},
    {0x1F3E, "\xe1\xbc\xb6"},
    {0x1F3F, "\xe1\xbc\xb7"},
    {0x1F48, "\xe1\xbd\x80"},
    {0x1F49, "\xe1\xbd\x81"},
    {0x1F4A, "\xe1\xbd\x82"},
    {0x1F4B, "\xe1\xbd\x83"},
    {0x1F4C, "\xe1\xbd\x84"},
    {0x1F4D, "\xe1\xbd\x85"},
    {0x1F59, "\xe1\xbd\x91"},
    {0x1F5B, "\xe1\xbd\x93"},
    {0x1F5D, "\xe1\xbd\x95"},
    {0x1F5F, "\xe1\xbd\x97"},
    {0x1F68, "\xe1\xbd\xa0"},
    {0x1F69, "\xe1\xbd\xa1"},
    {0x1F6A, "\xe1\xbd\xa2"},
    {0x1F6B, "\xe1\xbd\xa3"},
    {0x1F6C, "\xe1\xbd\xa4"},
    {0x1F6D, "\xe1\xbd\xa5"},
    {0x1F6E, "\xe1\xbd\xa6"},
    {0x1F6F, "\xe1\xbd\xa7"},
    {0x1F88, "\xe1\xbe\x80"},
    {0x1F89, "\xe1\xbe\x81"},
    {0x1F8A, "\xe1\xbe\x82"},
    {0x1F8B, "\xe1\xbe\x83"},
    {0x1F8C, "\xe1\xbe\x84"},
    {0x1F8D, "\xe1\xbe\x85"},
    {0x1F8E, "\xe1\xbe\x86"},
    {0x1F8F, "\xe1\xbe\x87"},
    {0x1F98, "\xe1\xbe\x90"},
    {0x1F99, "\xe1\xbe\x91"},
    {0x1F9A, "\xe1\xbe\x92"},
    {0x1F9B, "\xe1\xbe\x93"},
    {0x1F9C, "\xe1\xbe\x94"},
    {0x1F9D, "\xe1\xbe\x95"},
    {0x1F9E, "\xe1\xbe\x96"},
    {0x1F9F, "\xe1\xbe\x97"},
    {0x1FA8, "\xe1\xbe\xa0"},
    {0x1FA9, "\xe1\xbe\xa1"},
    {0x1FAA, "\xe1\xbe\xa2"},
    {0x1FAB, "\xe1\xbe\xa3"},
    {0x1FAC, "\xe1\xbe\xa4"},
    {0x1FAD, "\xe1\xbe\xa5"},
    {0x1FAE, "\xe1\xbe\xa6"},
    {0x1FAF, "\xe1\xbe\xa7"},
    {0x1FB8, "\xe1\xbe\xb0"},
    {0x1FB9, "\xe1\xbe\xb1"},
    {0x1FBA, "\xe1\xbd\xb0"},
    {0x1FBB, "\xe1\xbd\xb1"},
    {0x1FBC, "\xe1\xbe\xb3"},
    {0x1FC8, "\xe1\xbd\xb2"},
    {0x1FC9, "\xe1\xbd\xb3"},
    {0x1FCA, "\xe1\xbd\xb4"},
    {0x1FCB, "\xe1\xbd\xb5"},
    {0x1FCC, "\xe1\xbf\x83"},
    {0x1FD8, "\xe1\xbf\x90"},
    {0x1FD9, "\xe1\xbf\x91"},
    {0x1FDA, "\xe1\xbd\xb6"},
    {0x1FDB, "\xe1\xbd\xb7"},
    {0x1FE8, "\xe1\xbf\xa0"},
    {0x1FE9, "\xe1\xbf\xa1"},
    {0x1FEA, "\xe1\xbd\xba"},
    {0x1FEB, "\xe1\xbd\xbb"},
    {0x1FEC, "\xe1\xbf\xa5"},
    {0x1FF8, "\xe1\xbd\xb8"},
    {0x1FF9, "\xe1\xbd\xb9"},
    {0x1FFA, "\xe1\xbd\xbc"},
    {0x1FFB, "\xe1\xbd\xbd"},
    {0x1FFC, "\xe1\xbf\xb3"},
    {0x2126, "\xcf\x89"},
    {0x212A, "\x6b"},
    {0x212B, "\xc3\xa5"},
    {0x2132, "\xe2\x85\x8e"},
    {0x2160, "\xe2\x85\xb0"},
    {0x2161, "\xe2\x85\xb1"},
    {0x2162, "\xe2\x85\xb2"},
    {0x2163, "\xe2\x85\xb3"},
    {0x2164, "\xe2\x85\xb4"},
    {0x2165, "\xe2\x85\xb5"},
    {0x2166, "\xe2\x85\xb6"},
    {0x2167, "\xe2\x85\xb7"},
    {0x2168, "\xe2\x85\xb8"},
    {0x2169, "\xe2\x85\xb9"},
    {0x216A, "\xe2\x85\xba"},
    {0x216B, "\xe2\x85\xbb"},
    {0x216C, "\xe2\x85\xbc"},
    {0x216D, "\xe2\x85\xbd"},
    {0x216E, "\xe2\x85\xbe"},
    {0x216F, "\xe2\x85\xbf"},
    {0x2183, "\xe2\x86\x84"},
    {0x24B6, "\xe2\x93\x90"},
    {0x24B7, "\xe2\x93\x91"},
    {0x24B8, "\xe2\x93\x92"},
    {0x24B9, "\xe2\x93\x93"},
    {0x24BA, "\xe2\x93\x94"},
    {0x24BB, "\xe2\x93\x95"},
    {0x24BC, "\xe2\x93\x96"},
    {0x24BD, "\xe2\x93\x97"},
    {0x24BE, "\xe2\x93\x98"},
    {0x24BF, "\xe2\x93\x99"},
    {0x24C0, "\xe2\x93\x9a"},
    {0x24C1, "\xe2\x93\x9b"},
    {0x24C2, "\xe2\x93\x9c"},
    {0x24C3, "\xe2\x93\x9d"},
    {0x24C4, "\xe2\x93\x9e"},
    {0x24C5, "\xe2\x93\x9f"},
    {0x24C6, "\xe2\x93\xa0"},
    {0x24C7, "\xe2\x93\xa1"},
    {0x24C8, "\xe2\x93\xa2"},
    {0x24C9, "\xe2\x93\xa3"},
    {0x24CA, "\xe2\x93\xa4"},
    {0x24CB, "\xe2\x93\xa5"},
    {0x24CC, "\xe2\x93\xa6"},
    {0x24CD, "\xe2\x93\xa7"},
    {0x24CE, "\xe2\x93\xa8"},
    {0x24CF, "\xe2\x93\xa9"},
    {0x2C00, "\xe2\xb0\xb0"},
    {0x2C01, "\xe2\xb0\xb1"},
    {0x2C02, "\xe2\xb0\xb2"},
    {0x2C03, "\xe2\xb0\xb3"},
    {0x2C04, "\xe2\xb0\xb4"},
    {0x2C05, "\xe2\xb0\xb5"},
    {0x2C06, "\xe2\xb0\xb6"},
    {0x2C07, "\xe2\xb0\xb7"},
    {0x2C08, "\xe2\xb0\xb8"},
    {0x2C09, "\xe2\xb0\xb9"},
    {0x2C0A, "\xe2\xb0\xba"},
    {0x2C0B, "\xe2\xb0\xbb"},
    {0x2C0C, "\xe2\xb0\xbc"},
    {0x2C0D, "\xe2\xb0\xbd"},
    {0x2C0E, "\xe2\xb0\xbe"},
    {0x2C0F, "\xe2\xb0\xbf"},
    {0x2C10, "\xe2\xb1\x80"},
    {0x2C11, "\xe2\xb1\x81"},
    {0x2C12, "\xe2\xb1\x82"},
    {0x2C13, "\xe2\xb1\x83"},
    {0x2C14, "\xe2\xb1\x84"},
    {0x2C15, "\xe2\xb1\x85"},
    {0x2C16, "\xe2\xb1\x86"},
    {0x2C17, "\xe2\xb1\x87"},
    {0x2C18, "\xe2\xb1\x88"},
    {0x2C19, "\xe2\xb1\x89"},
    {0x2C1A, "\xe2\xb1\x8a"},
    {0x2C1B, "\xe2\xb1\x8b"},
    {0x2C1C, "\xe2\xb1\x8c"},
    {0x2C1D, "\xe2\xb1\x8d"},
    {0x2C1E, "\xe2\xb1\x8e"},
    {0x2C1F, "\xe2\xb1\x8f"},
    {0x2C20, "\xe2\xb1\x90"},
    {0x2C21, "\xe2\xb1\x91"},
    {0x2C22, "\xe2\xb1\x92"},
    {0x2C23, "\xe2\xb1\x93"},
    {0x2C24, "\xe2\xb1\x94"},
    {0x2C25, "\xe2\xb1\x95"},
    {0x2C26, "\xe2\xb1\x96"},
    {0x2C27, "\xe2\xb1\x97"},
    {0x2C28, "\xe2\xb1\x98"},
    {0x2C29, "\xe2\xb1\x99"},
    {0x2C2A, "\xe2\xb1\x9a"},
    {0x2C2B, "\xe2\xb1\x9b"},
    {0x2C2C, "\xe2\xb1\x9c"},
    {0x2C2D, "\xe2\xb1\x9d"},
    {0x2C2E, "\xe2\xb1\x9e"},
    {0x2C60, "\xe2\xb1\xa1"},
    {0x2C62, "\xc9\xab"},
    {0x2C63, "\xe1\xb5\xbd"},
    {0x2C64, "\xc9\xbd"},
    {0x2C67, "\xe2\xb1\xa8"},
    {0x2C69, "\xe2\xb1\xaa"},
    {0x2C6B, "\xe2\xb1\xac"},
    {0x2C6D, "\xc9\x91"},
    {0x2C6E, "\xc9\xb1"},
    {0x2C6F, "\xc9\x90"},
    {0x2C70, "\xc9\x92"},
    {0x2C72, "\xe2\xb1\xb3"},
    {0x2C75, "\xe2\xb1\xb6"},
    {0x2C7E, "\xc8\xbf"},
    {0x2C7F, "\xc9\x80"},
    {0x2C80, "\xe2\xb2\x81"},
    {0x2C82, "\xe2\xb2\x83"},
    {0x2C84, "\xe2\xb2\x85"},
    {0x2C86, "\xe2\xb2\x87"},
    {0x2C88, "\xe2\xb2\x89"},
    {0x2C8A, "\xe2\xb2\x8b"},
    {0x2C8C, "\xe2\xb2\x8d"},
    {0x2C8E, "\xe2\xb2\x8f"},
    {0x2C90, "\xe2\xb2\x91"},
    {0x2C92, "\xe2\xb2\x93"},
    {0x2C94, "\xe2\xb2\x95"},
    {0x2C96, "\xe2\xb2\x97"},
    {0x2C98, "\xe2\xb2\x99"},
    {0x2C9A, "\xe2\xb2\x9b"},
    {0x2C9C, "\xe2\xb2\x9d"},
    {0x2C9E, "\xe2\xb2\x9f"},
    {0x2CA0, "\xe2\xb2\xa1"},
    {0x2CA2, "\xe2\xb2\xa3"},
    {0x2CA4, "\xe2\xb2\xa5"},
    {0x2CA6, "\xe2\xb2\xa7"},
    {0x2CA8, "\xe2\xb2\xa9"},
    {0x2CAA, "\xe2\xb2\xab"},
    {0x2CAC, "\xe2\xb2\xad"},
    {0x2CAE, "\xe2\xb2\xaf"},
    {0x2CB0, "\xe2\xb2\xb1"},
    {0x2CB2, "\xe2\xb2\xb3"},
    {0x2CB4, "\xe2\xb2\xb5"},
    {0x2CB6, "\xe2\xb2\xb7"},
    {0x2CB8, "\xe2\xb2\xb9"},
    {0x2CBA, "\xe2\xb2\xbb"},
    {0x2CBC, "\xe2\xb2\xbd"},
    {0x2CBE, "\xe2\xb2\xbf"},
    {0x2CC0, "\xe2\xb3\x81"},
    {0x2CC2, "\xe2\xb3\x83"},
    {0x2CC4, "\xe2\xb3\x85"},
    {0x2CC6, "\xe2\xb3\x87"},
    {0x2CC8, "\xe2\xb3\x89"},
    {0x2CCA, "\xe2\xb3\x8b"},
    {0x2CCC, "\xe2\xb3\x8d"},
    {0x2CCE, "\xe2\xb3\x8f"},
    {0x2CD0, "\xe2\xb3\x91"},
    {0x2CD2, "\xe2\xb3\x93"},
    {0x2CD4, "\xe2\xb3\x95"},
    {0x2CD6, "\xe2\xb3\x97"},
    {0x2CD8, "\xe2\xb3\x99"},
    {0x2CDA, "\xe2\xb3\x9b"},
    {0x2CDC, "\xe2\xb3\x9d"},
    {0x2CDE, "\xe2\xb3\x9f"},
    {0x2CE0, "\xe2\xb3\xa1"},
    {0x2CE2, "\xe2\xb3\xa3"},
    {0x2CEB, "\xe2\xb3\xac"},
    {0x2CED, "\xe2\xb3\xae"},
    {0x2CF2, "\xe2\xb3\xb3"},
    {0xA640, "\xea\x99\x81"},
    {0xA642, "\xea\x99\x83"},
    {0xA644, "\xea\x99\x85"},
    {0xA646, "\xea\x99\x87"},
    {0xA648, "\xea\x99\x89"},
    {0xA64A, "\xea\x99\x8b"},
    {0xA64C, "\xea\x99\x8d"},
    {0xA64E, "\xea\x99\x8f"},
    {0xA650, "\xea\x99\x91"},
    {0xA652, "\xea\x99\x93"},
    {0xA654, "\xea\x99\x95"},
    {0xA656, "\xea\x99\x97"},
    {0xA658, "\xea\x99\x99"},
    {0xA65A, "\xea\x99\x9b"},
    {0xA65C, "\xea\x99\x9d"},
    {0xA65E, "\xea\x99\x9f"},
    {0xA660, "\xea\x99\xa1"},
    {0xA662, "\xea\x99\xa3"},
    {0xA664, "\xea\x99\xa5"},
    {0xA666, "\xea\x99\xa7"},
    {0xA668, "\xea\x99\xa9"},
    {0xA66A, "\xea\x99\xab"},
    {0xA66C, "\xea\x99\xad"},
    {0xA680, "\xea\x9a\x81"},
    {0xA682, "\xea\x9a\x83"},
    {0xA684, "\xea\x9a\x85"},
    {0xA686, "\xea\x9a\x87"},
    {0xA688, "\xea\x9a\x89"},
    {0xA68A, "\xea\x9a\x8b"},
    {0xA68C, "\xea\x9a\x8d"},
    {0xA68E, "\xea\x9a\x8f"},
    {0xA690, "\xea\x9a\x91"},
    {0xA692, "\xea\x9a\x93"},
    {0xA694, "\xea\x9a\x95"},
    {0xA696, "\xea\x9a\x97"},
    {0xA698, "\xea\x9a\x99"},
    {0xA69A, "\xea\x9a\x9b"},
    {0xA722, "\xea\x9c\xa3"},
    {0xA724, "\xea\x9c\xa5"},
    {0xA726, "\xea\x9c\xa7"},
    {0xA728, "\xea\x9c\xa9"},
    {0xA72A, "\xea\x9c\xab"},
    {0xA72C, "\xea\x9c\xad"},
    {0xA72E, "\xea\x9c\xaf"},
    {0xA732, "\xea\x9c\xb3"},
    {0xA734, "\xea\x9c\xb5"},
    {0xA736, "\xea\x9c\xb7"},
    {0xA738, "\xea\x9c\xb9"},
    {0xA73A, "\xea\x9c\xbb"},
    {0xA73C, "\xea\x9c\xbd"},
    {0xA73E, "\xea\x9c\xbf"},
    {0xA740, "\xea\x9d\x81"},
    {0xA742, "\xea\x9d\x83"},
    {0xA744, "\xea\x9d\x85"},
    {0xA746, "\xea\x9d\x87"},
    {0xA748, "\xea\x9d\x89"},
    {0xA74A, "\xea\x9d\x8b"},
    {0xA74C, "\xea\x9d\x8d"},
    {0xA74E, "\xea\x9d\x8f"},
    {0xA750, "\xea\x9d\x91"},
    {0xA752, "\xea\x9d\x93"},
    {0xA754, "\xea\x9d\x95"},
    {0xA756, "\xea\x9d\x97"},
    {0xA758, "\xea\x9d\x99"},
    {0xA75A, "\xea\x9d\x9b"},
    {0xA75C, "\xea\x9d\x9d"},
    {0xA75E, "\xea\x9d\x9f"},
    {0xA760, "\xea\x9d\xa1"},
    {0xA762, "\xea\x9d\xa3"},
    {0xA764, "\xea\x9d\xa5"},
    {0xA766, "\xea\x9d\xa7"},
    {0xA768, "\xea\x9d\xa9"},
    {0xA76A, "\xea\x9d\xab"},
    {0xA76C, "\xea\x9d\xad"},
    {0xA76E, "\xea\x9d\xaf"},
    {0xA779, "\xea\x9d\xba"},
    {0xA77B, "\xea\x9d\xbc"},
    {0xA77D, "\xe1\xb5\xb9"},
    {0xA77E, "\xea\x9d\xbf"},
    {0xA780, "\xea\x9e\x81"},
    {0xA782, "\xea\x9e\x83"},
    {0xA784, "\xea\x9e\x85"},
    {0xA786, "\xea\x9e\x87"},
    {0xA78B, "\xea\x9e\x8c"},
    {0xA78D, "\xc9\xa5"},
    {0xA790, "\xea\x9e\x91"},
    {0xA792, "\xea\x9e\x93"},
    {0xA796, "\xea\x9e\x97"},
    {0xA798, "\xea\x9e\x99"},
    {0xA79A, "\xea\x9e\x9b"},
    {0xA79C, "\xea\x9e\x9d"},
    {0xA79E, "\xea\x9e\x9f"},
    {0xA7A0, "\xea\x9e\xa1"},
    {0xA7A2, "\xea\x9e\xa3"},
    {0xA7A4, "\xea\x9e\xa5"},
    {0xA7A6, "\xea\x9e\xa7"},
    {0xA7A8, "\xea\x9e\xa9"},
    {0xA7AA, "\xc9\xa6"},
    {0xA7AB, "\xc9\x9c"},
    {0xA7AC, "\xc9\xa1"},
    {0xA7AD, "\xc9\xac"},
    {0xA7AE, "\xc9\xaa"},
    {0xA7B0, "\xca\x9e"},
    {0xA7B1, "\xca\x87"},
    {0xA7B2, "\xca\x9d"},
    {0xA7B3, "\xea\xad\x93"},
    {0xA7B4, "\xea\x9e\xb5"},
    {0xA7B6, "\xea\x9e\xb7"},
    {0xA7B8, "\xea\x9e\xb9"},
    {0xA7BA, "\xea\x9e\xbb"},
    {0xA7BC, "\xea\x9e\xbd"},
    {0xA7BE, "\xea\x9e\xbf"},
    {0xA7C2, "\xea\x9f\x83"},
    {0xA7C4, "\xea\x9e\x94"},
    {0xA7C5, "\xca\x82"},
    {0xA7C6, "\xe1\xb6\x8e"},
    {0xA7C7, "\xea\x9f\x88"},
    {0xA7C9, "\xea\x9f\x8a"},
    {0xA7F5, "\xea\x9f\xb6"},
    {0xFF21, "\xef\xbd\x81"},
    {0xFF22, "\xef\xbd\x82"},
    {0xFF23, "\xef\xbd\x83"},
    {0xFF24, "\xef\xbd\x84"},
    {0xFF25, "\xef\xbd\x85"},
    {0xFF26, "\xef\xbd\x86"},
    {0xFF27, "\xef\xbd\x87"},
    {0xFF28, "\xef\xbd\x88"},
    {0xFF29, "\xef\xbd\x89"},
    {0xFF2A, "\xef\xbd\x8a"},
    {0xFF2B, "\xef\xbd\x8b"},
    {0xFF2C, "\xef\xbd\x8c"},
    {0xFF2D, "\xef\xbd\x8d"},
    {0xFF2E, "\xef\xbd\x8e"},
    {0xFF2F, "\xef\xbd\x8f"},
    {0xFF30, "\xef\xbd\x90"},
    {0xFF31, "\xef\xbd\x91"},
    {0xFF32, "\xef\xbd\x92"},
    {0xFF33, "\xef\xbd\x93"},
    {0xFF34, "\xef\xbd\x94"},
    {0xFF35, "\xef\xbd\x95"},
    {0xFF36, "\xef\xbd\x96"},
    {0xFF37, "\xef\xbd\x97"},
    {0xFF38, "\xef\xbd\x98"},
    {0xFF39, "\xef\xbd\x99"},
    {0xFF3A, "\xef\xbd\x9a"},
    {0x10400, "\xf0\x90\x90\xa8"},
    {0x10401, "\xf0\x90\x90\xa9"},
    {0x10402, "\xf0\x90\x90\xaa"},
    {0x10403, "\xf0\x90\x90\xab"},
    {0x10404, "\xf0\x90\x90\xac"},
    {0x10405, "\xf0\x90\x90\xad"},
    {0x10406, "\xf0\x90\x90\xae"},
    {0x10407, "\xf0\x90\x90\xaf"},
    {0x10408, "\xf0\x90\x90\xb0"},
    {0x10409, "\xf0\x90\x90\xb1"},
    {0x1040A, "\xf0\x90\x90\xb2"},
    {0x1040B, "\xf0\x90\x90\xb3"},
    {0x1040C, "\xf0\x90\x90\xb4"},
    {0x1040D, "\xf0\x90\x90\xb5"},
    {0x1040E, "\xf0\x90\x90\xb6"},
    {0x1040F, "\xf0\x90\x90\xb7"},
    {0x10410, "\xf0\x90\x90\xb8"},
    {0x10411, "\xf0\x90\x90\xb9"},
    {0x10412, "\xf0\x90\x90\xba"},
    {0x10413, "\xf0\x90\x90\xbb"},
    {0x10414, "\xf0\x90\x90\xbc"},
    {0x10415, "\xf0\x90\x90\xbd"},
    {0x10416, "\xf0\x90\x90\xbe"},
    {0x10417, "\xf0\x90\x90\xbf"},
    {0x10418, "\xf0\x90\x91\x80"},
    {0x10419, "\xf0\x90\x91\x81"},
    {0x1041A, "\xf0\x90\x91\x82"},
    {0x1041B, "\xf0\x90\x91\x83"},
    {0x1041C, "\xf0\x90\x91\x84"},
    {0x1041D, "\xf0\x90\x91\x85"},
    {0x1041E, "\xf0\x90\x91\x86"},
    {0x1041F, "\xf0\x90\x91\x87"},
    {0x10420, "\xf0\x90\x91\x88"},
    {0x10421, "\xf0\x90\x91\x89"},
    {0x10422, "\xf0\x90\x91\x8a"},
    {0x10423, "\xf0\x90\x91\x8b"},
    {0x10424, "\xf0\x90\x91\x8c"},
    {0x10425, "\xf0\x90\x91\x8d"},
    {0x10426, "\xf0\x90\x91\x8e"},
    {0x10427, "\xf0\x90\x91\x8f"},
    {0x104B0, "\xf0\x90\x93\x98"},
    {0x104B1, "\xf0\x90\x93\x99"},
    {0x104B2, "\xf0\x90\x93\x9a"},
    {0x104B3, "\xf0\x90\x93\x9b"},
    {0x104B4, "\xf0\x90\x93\x9c"},
    {0x104B5, "\xf0\x90\x93\x9d"},
    {0x104B6, "\xf0\x90\x93\x9e"},
    {0x104B7, "\xf0\x90\x93\x9f"},
    {0x104B8, "\xf0\x90\x93\xa0"},
    {0x104B9, "\xf0\x90\x93\xa1"},
    {0x104BA, "\xf0\x90\x93\xa2"},
    {0x104BB, "\xf0\x90\x93\xa3"},
    {0x104BC, "\xf0\x90\x93\xa4"},
    {0x104BD, "\xf0\x90\x93\xa5"},
    {0x104BE, "\xf0\x90\x93\xa6"},
    {0x104BF, "\xf0\x90\x93\xa7"},
    {0x104C0, "\xf0\x90\x93\xa8"},
    {0x104C1, "\xf0\x90\x93\xa9"},
    {0x104C2, "\xf0\x90\x93\xaa"},
    {0x104C3, "\xf0\x90\x93\xab"},
    {0x104C4, "\xf0\x90\x93\xac"},
    {0x104C5, "\xf0\x90\x93\xad"},
    {0x104C6, "\xf0\x90\x93\xae"},
    {0x104C7, "\xf0\x90\x93\xaf"},
    {0x104C8, "\xf0\x90\x93\xb0"},
    {0x104C9, "\xf0\x90\x93\xb1"},
    {0x104CA, "\xf0\x90\x93\xb2"},
    {0x104CB, "\xf0\x90\x93\xb3"},
    {0x104CC, "\xf0\x90\x93\xb4"},
    {0x104CD, "\xf0\x90\x93\xb5"},
    {0x104CE, "\xf0\x90\x93\xb6"},
    {0x104CF, "\xf0\x90\x93\xb7"},
    {0x104D0, "\xf0\x90\x93\xb8"},
    {0x104D1, "\xf0\x90\x93\xb9"},
    {0x104D2, "\xf0\x90\x93\xba"},
    {0x104D3, "\xf0\x90\x93\xbb"},
    {0x10C80, "\xf0\x90\xb3\x80"},
    {0x10C81, "\xf0\x90\xb3\x81"},
    {0x10C82, "\xf0\x90\xb3\x82"},
    {0x10C83, "\xf0\x90\xb3\x83"},
    {0x10C84, "\xf0\x90\xb3\x84"},
    {0x10C85, "\xf0\x90\xb3\x85"},
    {0x10C86, "\xf0\x90\xb3\x86"},
    {0x10C87, "\xf0\x90\xb3\x87"},
    {0x10C88, "\xf0\x90\xb3\x88"},
    {0x10C89, "\xf0\x90\xb3\x89"},
    {0x10C8A, "\xf0\x90\xb3\x8a"},
    {0x10C8B, "\xf0\x90\xb3\x8b"},
    {0x10C8C, "\xf0\x90\xb3\x8c"},
    {0x10C8D, "\xf0\x90\xb3\x8d"},
    {0x10C8E, "\xf0\x90\xb3\x8e"},
    {0x10C8F, "\xf0\x90\xb3\x8f"},
    {0x10C90, "\xf0\x90\xb3\x90"},
    {0x10C91, "\xf0\x90\xb3\x91"},
    {0x10C92, "\xf0\x90\xb3\x92"},
    {0x10C93, "\xf0\x90\xb3\x93"},
    {0x10C94, "\xf0\x90\xb3\x94"},
    {0x10C95, "\xf0\x90\xb3\x95"},
    {0x10C96, "\xf0\x90\xb3\x96"},
    {0x10C97, "\xf0\x90\xb3\x97"},
    {0x10C98, "\xf0\x90\xb3\x98"},
    {0x10C99, "\xf0\x90\xb3\x99"},
    {0x10C9A, "\xf0\x90\xb3\x9a"},
    {0x10C9B, "\xf0\x90\xb3\x9b"},
    {0x10C9C, "\xf0\x90\xb3\x9c"},
    {0x10C9D, "\xf0\x90\xb3\x9d"},
    {0x10C9E, "\xf0\x90\xb3\x9e"},
    {0x10C9F, "\xf0\x90\xb3\x9f"},
    {0x10CA0, "\xf0\x90\xb3\xa0"},
    {0x10CA1, "\xf0\x90\xb3\xa1"},
    {0x10CA2, "\xf0\x90\xb3\xa2"},
    {0x10CA3, "\xf0\x90\xb3\xa3"},
    {0x10CA4, "\xf0\x90\xb3\xa4"},
    {0x10CA5, "\xf0\x90\xb3\xa5"},
    {0x10CA6, "\xf0\x90\xb3\xa6"},
    {0x10CA7, "\xf0\x90\xb3\xa7"},
    {0x10CA8, "\xf0\x90\xb3\xa8"},
    {0x10CA9, "\xf0\x90\xb3\xa9"},
    {0x10CAA, "\xf0\x90\xb3\xaa"},
    {0x10CAB, "\xf0\x90\xb3\xab"},
    {0x10CAC, "\xf0\x90\xb3\xac"},
    {0x10CAD, "\xf0\x90\xb3\xad"},
    {0x10CAE, "\xf0\x90\xb3\xae"},
    {0x10CAF, "\xf0\x90\xb3\xaf"},
    {0x10CB0, "\xf0\x90\xb3\xb0"},
    {0x10CB1, "\xf0\x90\xb3\xb1"},
    {0x10CB2, "\xf0\x90\xb3\xb2"},
    {0x118A0, "\xf0\x91\xa3\x80"},
    {0x118A1, "\xf0\x91\xa3\x81"},
    {0x118A2, "\xf0\x91\xa3\x82"},
    {0x118A3, "\xf0\x91\xa3\x83"},
    {0x118A4, "\xf0\x91\xa3\x84"},
    {0x118A5, "\xf0\x91\xa3\x85"},
    {0x118A6, "\xf0\x91\xa3\x86"},
    {0x118A7, "\xf0\x91\xa3\x87"},
    {0x118A8, "\xf0\x91\xa3\x88"},
    {0x118A9, "\xf0\x91\xa3\x89"},
    {0x118AA, "\xf0\x91\xa3\x8a"},
    {0x118AB, "\xf0\x91\xa3\x8b"},
    {0x118AC, "\xf0\x91\xa3\x8c"},
    {0x118AD, "\xf0\x91\xa3\x8d"},
    {0x118AE, "\xf0\x91\xa3\x8e"},
    {0x118AF, "\xf0\x91\xa3\x8f"},
    {0x118B0, "\xf0\x91\xa3\x90"},
    {0x118B1, "\xf0\x91\xa3\x91"},
    {0x118B2, "\xf0\x91\xa3\x92"},
    {0x118B3, "\xf0\x91\xa3\x93"},
    {0x118B4, "\xf0\x91\xa3\x94"},
    {0x118B5, "\xf0\x91\xa3\x95"},
    {0x118B6, "\xf0\x91\xa3\x96"},
    {0x118B7, "\xf0\x91\xa3\x97"},
    {0x118B8, "\xf0\x91\xa3\x98"},
    {0x118B9, "\xf0\x91\xa3\x99"},
    {0x118BA, "\xf0\x91\xa3\x9a"},
    {0x118BB, "\xf0\x91\xa3\x9b"},
    {0x118BC, "\xf0\x91\xa3\x9c"},
    {0x118BD, "\xf0\x91\xa3\x9d"},
    {0x118BE, "\xf0\x91\xa3\x9e"},
    {0x118BF, "\xf0\x91\xa3\x9f"},
    {0x16E40, "\xf0\x96\xb9\xa0"},
    {0x16E41, "\xf0\x96\xb9\xa1"},
    {0x16E42, "\xf0\x96\xb9\xa2"},
    {0x16E43, "\xf0\x96\xb9\xa3"},
    {0x16E44, "\xf0\x96\xb9\xa4"},
    {0x16E45, "\xf0\x96\xb9\xa5"},
    {0x16E46, "\xf0\x96\xb9\xa6"},
    {0x16E47, "\xf0\x96\xb9\xa7"},
    {0x16E48, "\xf0\x96\xb9\xa8"},
    {0x16E49, "\xf0\x96\xb9\xa9"},
    {0x16E4A, "\xf0\x96\xb9\xaa"},
    {0x16E4B, "\xf0\x96\xb9\xab"},
    {0x16E4C, "\xf0\x96\xb9\xac"},
    {0x16E4D, "\xf0\x96\xb9\xad"},
    {0x16E4E, "\xf0\x96\xb9\xae"},
    {0x16E4F, "\xf0\x96\xb9\xaf"},
    {0x16E50, "\xf0\x96\xb9\xb0"},
    {0x16E51, "\xf0\x96\xb9\xb1"},
    {0x16E52, "\xf0\x96\xb9\xb2"},
    {0x16E53, "\xf0\x96\xb9\xb3"},
    {0x16E54, "\xf0\x96\xb9\xb4"},
    {0x16E55, "\xf0\x96\xb9\xb5"},
    {0x16E56, "\xf0\x96\xb9\xb6"},
    {0x16E57, "\xf0\x96\xb9\xb7"},
    {0x16E58, "\xf0\x96\xb9\xb8"},
    {0x16E59, "\xf0\x96\xb9\xb9"},
    {0x16E5A, "\xf0\x96\xb9\xba"},
    {0x16E5B, "\xf0\x96\xb9\xbb"},
    {0x16E5C, "\xf0\x96\xb9\xbc"},
    {0x16E5D, "\xf0\x96\xb9\xbd"},
    {0x16E5E, "\xf0\x96\xb9\xbe"},
    {0x16E5F, "\xf0\x96\xb9\xbf"},
    {0x1E900, "\xf0\x9e\xa4\xa2"},
    {0x1E901, "\xf0\x9e\xa4\xa3"},
    {0x1E902, "\xf0\x9e\xa4\xa4"},
    {0x1E903, "\xf0\x9e\xa4\xa5"},
    {0x1E904, "\xf0\x9e\xa4\xa6"},
    {0x1E905, "\xf0\x9e\xa4\xa7"},
    {0x1E906, "\xf0\x9e\xa4\xa8"},
    {0x1E907, "\xf0\x9e\xa4\xa9"},
    {0x1E908, "\xf0\x9e\xa4\xaa"},
    {0x1E909, "\xf0\x9e\xa4\xab"},
    {0x1E90A, "\xf0\x9e\xa4\xac"},
    {0x1E90B, "\xf0\x9e\xa4\xad"},
    {0x1E90C, "\xf0\x9e\xa4\xae"},
    {0x1E90D, "\xf0\x9e\xa4\xaf"},
    {0x1E90E, "\xf0\x9e\xa4\xb0"},
    {0x1E90F, "\xf0\x9e\xa4\xb1"},
    {0x1E910, "\xf0\x9e\xa4\xb2"},
    {0x1E911, "\xf0\x9e\xa4\xb3"},
    {0x1E912, "\xf0\x9e\xa4\xb4"},
    {0x1E913, "\xf0\x9e\xa4\xb5"},
    {0x1E914, "\xf0\x9e\xa4\xb6"},
    {0x1E915, "\xf0\x9e\xa4\xb7"},
    {0x1E916, "\xf0\x9e\xa4\xb8"},
    {0x1E917, "\xf0\x9e\xa4\xb9"},
    {0x1E918, "\xf0\x9e\xa4\xba"},
    {0x1E919, "\xf0\x9e\xa4\xbb"},
    {0x1E91A, "\xf0\x9e\xa4\xbc"},
    {0x1E91B, "\xf0\x9e\xa4\xbd"},
    {0x1E91C, "\xf0\x9e\xa4\xbe"},
    {0x1E91D, "\xf0\x9e\xa4\xbf"},
    {0x1E91E, "\xf0\x9e\xa5\x80"},
    {0x1E91F, "\xf0\x9e\xa5\x81"},
    {0x1E920, "\xf0\x9e\xa5\x82"},
    {0x1E921, "\xf0\x9e\xa5\x83"},
}};

}  // namespace qeforge::detail
