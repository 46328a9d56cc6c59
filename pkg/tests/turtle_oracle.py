"""Independent Turtle 1.1 parser used as the round-trip oracle.

Deliberately shares no code with the serializer under test: a hand-rolled
scanner/parser over the Turtle grammar subset needed here (prefix
directives, IRIs, prefixed names, string literals with escapes, datatypes,
language tags, predicate-object and object lists, the ``a`` keyword, and
numeric/boolean shorthand). Blank nodes are rejected: the exporter never
mints them, and their absence keeps graph equality a plain set comparison.
"""

from __future__ import annotations

RDF_TYPE = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type"
XSD_INTEGER = "http://www.w3.org/2001/XMLSchema#integer"
XSD_DECIMAL = "http://www.w3.org/2001/XMLSchema#decimal"
XSD_BOOLEAN = "http://www.w3.org/2001/XMLSchema#boolean"

# object tuples: ("iri", value) or ("literal", lexical, datatype-or-None, lang-or-None)
OracleTriple = tuple[str, str, tuple]


class TurtleParseError(ValueError):
    pass


class _Scanner:
    def __init__(self, text: str) -> None:
        self.text = text
        self.pos = 0

    def eof(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.text)

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def skip_ws(self) -> None:
        while self.pos < len(self.text):
            char = self.text[self.pos]
            if char in " \t\r\n":
                self.pos += 1
            elif char == "#":
                while self.pos < len(self.text) and self.text[self.pos] != "\n":
                    self.pos += 1
            else:
                return

    def expect(self, literal: str) -> None:
        self.skip_ws()
        if not self.text.startswith(literal, self.pos):
            context = self.text[self.pos : self.pos + 30]
            raise TurtleParseError(f"expected {literal!r} at {self.pos}: ...{context!r}")
        self.pos += len(literal)

    def try_consume(self, literal: str) -> bool:
        self.skip_ws()
        if self.text.startswith(literal, self.pos):
            self.pos += len(literal)
            return True
        return False

    def try_keyword(self, word: str) -> bool:
        """Consume ``word`` only when not the head of a longer name."""
        self.skip_ws()
        if not self.text.startswith(word, self.pos):
            return False
        after = self.text[self.pos + len(word) : self.pos + len(word) + 1]
        if after and (_is_pname_char(after) or after == ":"):
            return False
        self.pos += len(word)
        return True


def _decode_escapes(raw: str, allow_echar: bool = True) -> str:
    out: list[str] = []
    i = 0
    while i < len(raw):
        char = raw[i]
        if char != "\\":
            out.append(char)
            i += 1
            continue
        if i + 1 >= len(raw):
            raise TurtleParseError("dangling escape")
        kind = raw[i + 1]
        if kind == "u":
            out.append(chr(int(raw[i + 2 : i + 6], 16)))
            i += 6
        elif kind == "U":
            out.append(chr(int(raw[i + 2 : i + 10], 16)))
            i += 10
        elif allow_echar and kind in "tbnrf\"'\\":
            out.append({"t": "\t", "b": "\b", "n": "\n", "r": "\r", "f": "\f", '"': '"', "'": "'", "\\": "\\"}[kind])
            i += 2
        else:
            raise TurtleParseError(f"unknown escape \\{kind}")
    return "".join(out)


_PN_CHARS_BASE = (
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz"
)


def _is_pname_char(char: str) -> bool:
    return char.isalnum() or char in "_-." or ord(char) > 0x7F


class TurtleOracle:
    def __init__(self) -> None:
        self.prefixes: dict[str, str] = {}
        self.triples: set[OracleTriple] = set()

    # --- term readers ------------------------------------------------------

    def _read_iriref(self, scanner: _Scanner) -> str:
        scanner.expect("<")
        start = scanner.pos
        while scanner.pos < len(scanner.text) and scanner.text[scanner.pos] != ">":
            if scanner.text[scanner.pos] in " \n\t":
                raise TurtleParseError("whitespace inside IRIREF")
            scanner.pos += 1
        if scanner.pos >= len(scanner.text):
            raise TurtleParseError("unterminated IRIREF")
        raw = scanner.text[start : scanner.pos]
        scanner.pos += 1
        return _decode_escapes(raw, allow_echar=False)

    def _read_pname(self, scanner: _Scanner) -> str:
        scanner.skip_ws()
        start = scanner.pos
        while scanner.pos < len(scanner.text) and (
            _is_pname_char(scanner.text[scanner.pos]) or scanner.text[scanner.pos] == "%"
        ):
            scanner.pos += 1
        prefix_part = scanner.text[start : scanner.pos]
        if scanner.peek() != ":":
            raise TurtleParseError(f"expected prefixed name at {start}")
        scanner.pos += 1
        local_start = scanner.pos
        while scanner.pos < len(scanner.text) and (
            _is_pname_char(scanner.text[scanner.pos]) or scanner.text[scanner.pos] in ":%"
        ):
            scanner.pos += 1
        local = scanner.text[local_start : scanner.pos]
        if local.endswith("."):
            # a trailing dot is the statement terminator, not part of the name
            local = local[:-1]
            scanner.pos -= 1
        if prefix_part not in self.prefixes:
            raise TurtleParseError(f"unknown prefix {prefix_part!r}")
        return self.prefixes[prefix_part] + local

    def _read_iri(self, scanner: _Scanner) -> str:
        scanner.skip_ws()
        if scanner.peek() == "<":
            return self._read_iriref(scanner)
        return self._read_pname(scanner)

    def _read_string(self, scanner: _Scanner) -> str:
        scanner.skip_ws()
        text = scanner.text
        for quote in ('"""', "'''"):
            if text.startswith(quote, scanner.pos):
                end = text.find(quote, scanner.pos + 3)
                while end != -1 and text[end - 1] == "\\":
                    end = text.find(quote, end + 1)
                if end == -1:
                    raise TurtleParseError("unterminated long string")
                raw = text[scanner.pos + 3 : end]
                scanner.pos = end + 3
                return _decode_escapes(raw)
        quote_char = scanner.peek()
        if quote_char not in ("\"", "'"):
            raise TurtleParseError(f"expected string at {scanner.pos}")
        scanner.pos += 1
        out_start = scanner.pos
        while scanner.pos < len(text):
            char = text[scanner.pos]
            if char == "\\":
                scanner.pos += 2
                continue
            if char == quote_char:
                raw = text[out_start : scanner.pos]
                scanner.pos += 1
                return _decode_escapes(raw)
            if char == "\n":
                raise TurtleParseError("newline in short string")
            scanner.pos += 1
        raise TurtleParseError("unterminated string")

    def _read_object(self, scanner: _Scanner) -> tuple:
        scanner.skip_ws()
        char = scanner.peek()
        if char == "_":
            raise TurtleParseError("blank nodes are not supported by this oracle")
        if char == "<":
            return ("iri", self._read_iriref(scanner))
        if char in ("\"", "'"):
            lexical = self._read_string(scanner)
            if scanner.try_consume("^^"):
                return ("literal", lexical, self._read_iri(scanner), None)
            scanner.skip_ws()
            if scanner.peek() == "@":
                scanner.pos += 1
                start = scanner.pos
                while scanner.pos < len(scanner.text) and (
                    scanner.text[scanner.pos].isalnum() or scanner.text[scanner.pos] == "-"
                ):
                    scanner.pos += 1
                return ("literal", lexical, None, scanner.text[start : scanner.pos])
            return ("literal", lexical, None, None)
        if char.isdigit() or char in "+-":
            start = scanner.pos
            scanner.pos += 1
            seen_dot = False
            while scanner.pos < len(scanner.text) and (
                scanner.text[scanner.pos].isdigit() or (scanner.text[scanner.pos] == "." and not seen_dot)
            ):
                if scanner.text[scanner.pos] == ".":
                    # a dot followed by a non-digit terminates the statement
                    nxt = scanner.text[scanner.pos + 1 : scanner.pos + 2]
                    if not nxt.isdigit():
                        break
                    seen_dot = True
                scanner.pos += 1
            lexical = scanner.text[start : scanner.pos]
            return ("literal", lexical, XSD_DECIMAL if seen_dot else XSD_INTEGER, None)
        if scanner.try_consume("true"):
            return ("literal", "true", XSD_BOOLEAN, None)
        if scanner.try_consume("false"):
            return ("literal", "false", XSD_BOOLEAN, None)
        return ("iri", self._read_pname(scanner))

    # --- statements ----------------------------------------------------------

    def _read_directive(self, scanner: _Scanner) -> None:
        scanner.skip_ws()
        start = scanner.pos
        while scanner.pos < len(scanner.text) and not scanner.text[scanner.pos].isspace():
            if scanner.text[scanner.pos] == ":":
                break
            scanner.pos += 1
        prefix = scanner.text[start : scanner.pos]
        scanner.expect(":")
        namespace = self._read_iriref(scanner)
        self.prefixes[prefix] = namespace

    def parse(self, text: str) -> set[OracleTriple]:
        scanner = _Scanner(text)
        while not scanner.eof():
            if scanner.try_consume("@prefix"):
                self._read_directive(scanner)
                scanner.expect(".")
                continue
            if scanner.try_consume("PREFIX"):
                self._read_directive(scanner)
                continue
            if scanner.try_consume("@base") or scanner.try_consume("BASE"):
                raise TurtleParseError("base IRIs are not supported by this oracle")
            subject = self._read_iri(scanner)
            while True:
                scanner.skip_ws()
                if scanner.try_consume("a"):
                    predicate = RDF_TYPE
                else:
                    predicate = self._read_iri(scanner)
                while True:
                    obj = self._read_object(scanner)
                    self.triples.add((subject, predicate, obj))
                    if not scanner.try_consume(","):
                        break
                if scanner.try_consume(";"):
                    scanner.skip_ws()
                    if scanner.peek() == ".":  # trailing semicolon
                        scanner.pos += 1
                        break
                    continue
                scanner.expect(".")
                break
        return self.triples


def parse_turtle(text: str) -> set[OracleTriple]:
    return TurtleOracle().parse(text)


def graph_to_oracle_triples(graph) -> set[OracleTriple]:
    """Convert a ProvenanceGraph's triples into the oracle's tuple form."""
    converted: set[OracleTriple] = set()
    for subject, predicate, obj in graph.triples:
        if hasattr(obj, "value"):
            converted.add((subject, predicate, ("iri", obj.value)))
        else:
            converted.add((subject, predicate, ("literal", obj.lexical, obj.datatype, obj.lang)))
    return converted
