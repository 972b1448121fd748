package widgets;

import java.util.LinkedHashMap;
import java.util.Map;

/**
 * Renders dashboard widgets.
 *
 * Rendering is expensive, so unchanged widgets are served from a cache.
 */
public final class WidgetRenderer {
  private final Map<String, View> cache;

  /** Creates a renderer whose cache holds at most {@code capacity} views. */
  public WidgetRenderer(int capacity) {
    this.cache = new LinkedHashMap<>(capacity, 0.75f, true);
  }

  /** Renders {@code widget}, reusing the cached view when its state is unchanged. */
  public View render(Widget widget) {
    String key = widget.stateKey();
    // A hit means the widget state is unchanged since the last render.
    View cached = cache.get(key);
    if (cached != null) {
      return cached;
    }
    /* Miss: render and remember the view. */
    View view = widget.draw();
    cache.put(key, view);
    return view;
  }

  private void unrelated() {
    // This comment sits in a method the commit does not touch.
  }
}
