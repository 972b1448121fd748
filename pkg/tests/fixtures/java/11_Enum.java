package e;

/** Colors. */
public enum Color {
  /** Red. */ RED,
  GREEN; // trailing

  /** Lookup. */
  static Color of(String s) { return RED; }
}
